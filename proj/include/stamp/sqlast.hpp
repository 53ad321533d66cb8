// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "stamp/table.hpp"

namespace stamp {

enum class Agg : uint8_t { None = 0, Max, Min, Count, Sum, Avg };
enum class CondOp : uint8_t { Eq = 0, Gt, Lt };

// Public dataset conventions for the JSON encoding.
inline const char* kAggNames[] = {"", "MAX", "MIN", "COUNT", "SUM", "AVG"};
inline const char* kCondOpNames[] = {"=", ">", "<"};

struct Cond {
  int col = 0;
  CondOp op = CondOp::Eq;
  std::string value;

  bool operator==(const Cond&) const = default;
};

// One SELECT aggregator, one SELECT column, zero or more conditions.
struct SqlQuery {
  Agg agg = Agg::None;
  int sel = 0;
  std::vector<Cond> conds;

  bool operator==(const SqlQuery&) const = default;
};

// ---------------------------------------------------------------------------
// Decoder token alphabet

enum class Keyword : uint8_t {
  Select = 0, Where, And, Eq, Gt, Lt, Max, Min, Count, Sum, Avg
};
inline constexpr int kNumKeywords = 11;
// The SQL channel also owns End, appended after the keywords.
inline constexpr int kSqlChannelSize = kNumKeywords + 1;
inline constexpr int kEndIndex = kNumKeywords;

const char* keyword_name(Keyword k);
Keyword agg_keyword(Agg a);      // agg != None
Keyword op_keyword(CondOp op);

enum class TokenKind : uint8_t { Column, Cell, Keyword, End, QuestionWord };

// The unit of generation: an entire column name or cell is one token.
// QuestionWord only appears in the cell-channel-disabled ablation, where
// WHERE values are copied word-by-word from the question.
struct DecoderToken {
  TokenKind kind = TokenKind::End;
  int col = -1;       // Column, Cell
  int row = -1;       // Cell
  Keyword kw = Keyword::Select;
  int qpos = -1;      // QuestionWord

  static DecoderToken column(int c) { return {TokenKind::Column, c, -1, Keyword::Select, -1}; }
  static DecoderToken cell(int c, int r) { return {TokenKind::Cell, c, r, Keyword::Select, -1}; }
  static DecoderToken keyword(Keyword k) { return {TokenKind::Keyword, -1, -1, k, -1}; }
  static DecoderToken end() { return {TokenKind::End, -1, -1, Keyword::Select, -1}; }
  static DecoderToken question_word(int q) { return {TokenKind::QuestionWord, -1, -1, Keyword::Select, q}; }

  bool operator==(const DecoderToken&) const = default;
};

using TokenSeq = std::vector<DecoderToken>;

std::string token_to_string(const DecoderToken& tok, const Table& t);

// ---------------------------------------------------------------------------
// Linearization

// SELECT [agg] Column(sel) [WHERE Column op Cell [AND Column op Cell]...] End
// Cell rows resolve to the lowest-index row whose raw text equals the value.
// Returns nullopt when some condition value is not a cell of its column
// (such gold examples are excluded from training with a counter).
// Variant of linearize for the cell-less value mode: condition values become
// runs of QuestionWord tokens pointing at question positions. A contiguous
// occurrence of the value's tokens is preferred; otherwise each token maps to
// its first occurrence. Returns nullopt when a value token is absent from the
// question.
std::optional<TokenSeq> linearize_question_values(
    const SqlQuery& q, const Table& t,
    const std::vector<std::string>& question, std::string* error = nullptr);

std::optional<TokenSeq> linearize(const SqlQuery& q, const Table& t,
                                  std::string* error = nullptr);

struct Malformed {
  int pos = 0;            // first offending token position
  std::string reason;
};

// Inverse of linearize. `question` resolves QuestionWord tokens and is only
// needed for sequences from the cell-channel-disabled ablation.
std::variant<SqlQuery, Malformed> delinearize(
    const TokenSeq& seq, const Table& t,
    const std::vector<std::string>* question = nullptr);

// ---------------------------------------------------------------------------
// Validity and canonical form

enum class InvalidReason : uint8_t {
  None = 0,
  ColumnOutOfRange,
  ValueNotInColumn,
  NonNumericAggregate,  // SUM/AVG over a column with non-numeric cells
};

const char* invalid_reason_name(InvalidReason r);

InvalidReason validate(const SqlQuery& q, const Table& t);

// Canonical string: "SELECT <AGG(>col<)> FROM <id> WHERE col OP val AND ...".
// Single spaces, uppercase keywords, identifiers and values verbatim.
// Requires indices in range (throws NumericError otherwise).
std::string serialize(const SqlQuery& q, const Table& t);

// ---------------------------------------------------------------------------
// Execution

enum class ExecError : uint8_t { None = 0, InvalidQuery, NonNumeric };

// Scalar results hold a number or a text extremum; aggregates over an empty
// row set yield a null scalar (neither). agg == None yields a value list.
struct ExecutionResult {
  ExecError error = ExecError::None;
  bool is_list = false;
  std::vector<std::string> values;  // list values, row order
  std::optional<double> number;
  std::optional<std::string> text;

  bool ok() const { return error == ExecError::None; }
  bool is_null_scalar() const { return ok() && !is_list && !number && !text; }

  static ExecutionResult failure(ExecError e) {
    ExecutionResult r;
    r.error = e;
    return r;
  }
};

// Row filter: EQ is case-insensitive full-string match on raw cell text;
// GT/LT compare numerically when both sides parse, else lexicographically.
// Aggregators apply over the sel column of surviving rows.
ExecutionResult execute(const SqlQuery& q, const Table& t);

// Equality notion for execution accuracy: numeric scalars within 1e-9 with
// string->number coercion, lists as multisets.
bool results_equal(const ExecutionResult& a, const ExecutionResult& b);

}  // namespace stamp
