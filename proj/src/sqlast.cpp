// SPDX-License-Identifier: Apache-2.0
#include "stamp/sqlast.hpp"

#include <algorithm>
#include <map>

#include "stamp/common.hpp"
#include "stamp/text.hpp"

namespace stamp {

const char* keyword_name(Keyword k) {
  static const char* names[] = {"SELECT", "WHERE", "AND", "=", ">", "<",
                                "MAX", "MIN", "COUNT", "SUM", "AVG"};
  return names[static_cast<int>(k)];
}

Keyword agg_keyword(Agg a) {
  switch (a) {
    case Agg::Max: return Keyword::Max;
    case Agg::Min: return Keyword::Min;
    case Agg::Count: return Keyword::Count;
    case Agg::Sum: return Keyword::Sum;
    case Agg::Avg: return Keyword::Avg;
    case Agg::None: break;
  }
  throw NumericError("agg_keyword: Agg::None has no keyword");
}

Keyword op_keyword(CondOp op) {
  switch (op) {
    case CondOp::Eq: return Keyword::Eq;
    case CondOp::Gt: return Keyword::Gt;
    case CondOp::Lt: return Keyword::Lt;
  }
  throw NumericError("op_keyword: bad op");
}

std::string token_to_string(const DecoderToken& tok, const Table& t) {
  switch (tok.kind) {
    case TokenKind::Column:
      return "Column(" + t.header_raw[tok.col] + ")";
    case TokenKind::Cell:
      return "Cell(" + t.header_raw[tok.col] + ", row " +
             std::to_string(tok.row) + ", \"" + t.rows[tok.row][tok.col].raw +
             "\")";
    case TokenKind::Keyword:
      return std::string("Keyword(") + keyword_name(tok.kw) + ")";
    case TokenKind::End:
      return "End";
    case TokenKind::QuestionWord:
      return "QuestionWord(" + std::to_string(tok.qpos) + ")";
  }
  return "?";
}

namespace {

// Lowest row index whose raw text equals `value` exactly.
int find_cell_row(const Table& t, int col, const std::string& value) {
  for (int r = 0; r < t.n_rows(); ++r)
    if (t.rows[r][col].raw == value) return r;
  return -1;
}

}  // namespace

std::optional<TokenSeq> linearize(const SqlQuery& q, const Table& t,
                                  std::string* error) {
  TokenSeq seq;
  seq.push_back(DecoderToken::keyword(Keyword::Select));
  if (q.agg != Agg::None) seq.push_back(DecoderToken::keyword(agg_keyword(q.agg)));
  seq.push_back(DecoderToken::column(q.sel));
  for (size_t i = 0; i < q.conds.size(); ++i) {
    const Cond& c = q.conds[i];
    int row = find_cell_row(t, c.col, c.value);
    if (row < 0) {
      if (error)
        *error = "condition value \"" + c.value +
                 "\" is not a cell of column \"" + t.header_raw[c.col] + "\"";
      return std::nullopt;
    }
    seq.push_back(DecoderToken::keyword(i == 0 ? Keyword::Where : Keyword::And));
    seq.push_back(DecoderToken::column(c.col));
    seq.push_back(DecoderToken::keyword(op_keyword(c.op)));
    seq.push_back(DecoderToken::cell(c.col, row));
  }
  seq.push_back(DecoderToken::end());
  return seq;
}

std::optional<TokenSeq> linearize_question_values(
    const SqlQuery& q, const Table& t,
    const std::vector<std::string>& question, std::string* error) {
  TokenSeq seq;
  if (q.sel < 0 || q.sel >= t.n_cols()) {
    if (error) *error = "select column out of range";
    return std::nullopt;
  }
  seq.push_back(DecoderToken::keyword(Keyword::Select));
  if (q.agg != Agg::None) seq.push_back(DecoderToken::keyword(agg_keyword(q.agg)));
  seq.push_back(DecoderToken::column(q.sel));
  for (size_t i = 0; i < q.conds.size(); ++i) {
    const Cond& c = q.conds[i];
    if (c.col < 0 || c.col >= t.n_cols()) {
      if (error) *error = "condition column out of range";
      return std::nullopt;
    }
    std::vector<std::string> words = tokenize(c.value);
    if (words.empty()) words.push_back(kEmptyToken);
    std::vector<int> positions;
    int n = static_cast<int>(question.size());
    int m = static_cast<int>(words.size());
    for (int start = 0; start + m <= n && positions.empty(); ++start) {
      bool match = true;
      for (int k = 0; k < m; ++k)
        if (question[start + k] != words[k]) {
          match = false;
          break;
        }
      if (match)
        for (int k = 0; k < m; ++k) positions.push_back(start + k);
    }
    if (positions.empty()) {
      for (const std::string& w : words) {
        int found = -1;
        for (int p = 0; p < n; ++p)
          if (question[p] == w) {
            found = p;
            break;
          }
        if (found < 0) {
          if (error)
            *error = "value word \"" + w + "\" does not occur in the question";
          return std::nullopt;
        }
        positions.push_back(found);
      }
    }
    seq.push_back(DecoderToken::keyword(i == 0 ? Keyword::Where : Keyword::And));
    seq.push_back(DecoderToken::column(c.col));
    seq.push_back(DecoderToken::keyword(op_keyword(c.op)));
    for (int p : positions) seq.push_back(DecoderToken::question_word(p));
  }
  seq.push_back(DecoderToken::end());
  return seq;
}

namespace {

bool is_agg_kw(Keyword k) {
  return k == Keyword::Max || k == Keyword::Min || k == Keyword::Count ||
         k == Keyword::Sum || k == Keyword::Avg;
}

Agg agg_from_keyword(Keyword k) {
  switch (k) {
    case Keyword::Max: return Agg::Max;
    case Keyword::Min: return Agg::Min;
    case Keyword::Count: return Agg::Count;
    case Keyword::Sum: return Agg::Sum;
    case Keyword::Avg: return Agg::Avg;
    default: throw NumericError("agg_from_keyword: not an aggregator");
  }
}

bool is_op_kw(Keyword k) {
  return k == Keyword::Eq || k == Keyword::Gt || k == Keyword::Lt;
}

CondOp op_from_keyword(Keyword k) {
  switch (k) {
    case Keyword::Eq: return CondOp::Eq;
    case Keyword::Gt: return CondOp::Gt;
    case Keyword::Lt: return CondOp::Lt;
    default: throw NumericError("op_from_keyword: not an operator");
  }
}

}  // namespace

std::variant<SqlQuery, Malformed> delinearize(
    const TokenSeq& seq, const Table& t,
    const std::vector<std::string>* question) {
  auto fail = [](int pos, std::string reason) {
    return Malformed{pos, std::move(reason)};
  };
  size_t i = 0;
  auto at_end = [&] { return i >= seq.size(); };
  if (at_end()) return fail(0, "empty sequence");
  if (!(seq[i].kind == TokenKind::Keyword && seq[i].kw == Keyword::Select))
    return fail(static_cast<int>(i), "expected SELECT");
  ++i;

  SqlQuery q;
  if (at_end()) return fail(static_cast<int>(i), "missing select column");
  if (seq[i].kind == TokenKind::Keyword && is_agg_kw(seq[i].kw)) {
    q.agg = agg_from_keyword(seq[i].kw);
    ++i;
  }
  if (at_end() || seq[i].kind != TokenKind::Column)
    return fail(static_cast<int>(i), "missing select column");
  if (seq[i].col < 0 || seq[i].col >= t.n_cols())
    return fail(static_cast<int>(i), "select column out of range");
  q.sel = seq[i].col;
  ++i;

  bool first_cond = true;
  while (true) {
    if (at_end()) return fail(static_cast<int>(i), "missing End");
    if (seq[i].kind == TokenKind::End) {
      if (i + 1 != seq.size())
        return fail(static_cast<int>(i + 1), "tokens after End");
      return q;
    }
    Keyword expect = first_cond ? Keyword::Where : Keyword::And;
    if (!(seq[i].kind == TokenKind::Keyword && seq[i].kw == expect))
      return fail(static_cast<int>(i),
                  first_cond ? "expected WHERE or End" : "expected AND or End");
    ++i;
    first_cond = false;

    if (at_end() || seq[i].kind != TokenKind::Column)
      return fail(static_cast<int>(i), "expected condition column");
    int col = seq[i].col;
    if (col < 0 || col >= t.n_cols())
      return fail(static_cast<int>(i), "condition column out of range");
    ++i;

    if (at_end() || seq[i].kind != TokenKind::Keyword || !is_op_kw(seq[i].kw))
      return fail(static_cast<int>(i), "expected condition operator");
    CondOp op = op_from_keyword(seq[i].kw);
    ++i;

    if (at_end()) return fail(static_cast<int>(i), "expected condition value");
    std::string value;
    if (seq[i].kind == TokenKind::Cell) {
      if (seq[i].col != col)
        return fail(static_cast<int>(i),
                    "cell column does not match the condition column");
      if (seq[i].row < 0 || seq[i].row >= t.n_rows())
        return fail(static_cast<int>(i), "cell row out of range");
      value = t.rows[seq[i].row][seq[i].col].raw;
      ++i;
    } else if (seq[i].kind == TokenKind::QuestionWord) {
      if (!question)
        return fail(static_cast<int>(i),
                    "question-word token without a question");
      std::vector<std::string> words;
      while (!at_end() && seq[i].kind == TokenKind::QuestionWord) {
        int p = seq[i].qpos;
        if (p < 0 || p >= static_cast<int>(question->size()))
          return fail(static_cast<int>(i), "question position out of range");
        words.push_back((*question)[p]);
        ++i;
      }
      value = join_tokens(words);
    } else {
      return fail(static_cast<int>(i), "expected condition value");
    }
    q.conds.push_back(Cond{col, op, value});
  }
}

const char* invalid_reason_name(InvalidReason r) {
  switch (r) {
    case InvalidReason::None: return "Valid";
    case InvalidReason::ColumnOutOfRange: return "ColumnOutOfRange";
    case InvalidReason::ValueNotInColumn: return "ValueNotInColumn";
    case InvalidReason::NonNumericAggregate: return "NonNumericAggregate";
  }
  return "?";
}

InvalidReason validate(const SqlQuery& q, const Table& t) {
  if (q.sel < 0 || q.sel >= t.n_cols()) return InvalidReason::ColumnOutOfRange;
  for (const Cond& c : q.conds) {
    if (c.col < 0 || c.col >= t.n_cols())
      return InvalidReason::ColumnOutOfRange;
    if (find_cell_row(t, c.col, c.value) < 0)
      return InvalidReason::ValueNotInColumn;
  }
  if ((q.agg == Agg::Sum || q.agg == Agg::Avg) && !t.column_all_numeric(q.sel))
    return InvalidReason::NonNumericAggregate;
  return InvalidReason::None;
}

std::string serialize(const SqlQuery& q, const Table& t) {
  if (q.sel < 0 || q.sel >= t.n_cols())
    throw NumericError("serialize: select column out of range");
  std::string s = "SELECT ";
  if (q.agg == Agg::None) {
    s += t.header_raw[q.sel];
  } else {
    s += kAggNames[static_cast<int>(q.agg)];
    s += "(" + t.header_raw[q.sel] + ")";
  }
  s += " FROM " + t.id;
  for (size_t i = 0; i < q.conds.size(); ++i) {
    const Cond& c = q.conds[i];
    if (c.col < 0 || c.col >= t.n_cols())
      throw NumericError("serialize: condition column out of range");
    s += (i == 0) ? " WHERE " : " AND ";
    s += t.header_raw[c.col];
    s += " ";
    s += kCondOpNames[static_cast<int>(c.op)];
    s += " ";
    s += c.value;
  }
  return s;
}

namespace {

bool cond_holds(const Cond& c, const std::string& cell_raw) {
  switch (c.op) {
    case CondOp::Eq:
      return ci_equal(cell_raw, c.value);
    case CondOp::Gt: {
      auto a = parse_number(cell_raw), b = parse_number(c.value);
      if (a && b) return *a > *b;
      return cell_raw > c.value;
    }
    case CondOp::Lt: {
      auto a = parse_number(cell_raw), b = parse_number(c.value);
      if (a && b) return *a < *b;
      return cell_raw < c.value;
    }
  }
  return false;
}

}  // namespace

ExecutionResult execute(const SqlQuery& q, const Table& t) {
  if (q.sel < 0 || q.sel >= t.n_cols())
    return ExecutionResult::failure(ExecError::InvalidQuery);
  for (const Cond& c : q.conds)
    if (c.col < 0 || c.col >= t.n_cols())
      return ExecutionResult::failure(ExecError::InvalidQuery);

  std::vector<const std::string*> matched;  // sel-column cells, row order
  for (const auto& row : t.rows) {
    bool all = true;
    for (const Cond& c : q.conds) {
      if (!cond_holds(c, row[c.col].raw)) {
        all = false;
        break;
      }
    }
    if (all) matched.push_back(&row[q.sel].raw);
  }

  ExecutionResult res;
  switch (q.agg) {
    case Agg::None: {
      res.is_list = true;
      for (const auto* v : matched) res.values.push_back(*v);
      return res;
    }
    case Agg::Count: {
      res.number = static_cast<double>(matched.size());
      return res;
    }
    case Agg::Max:
    case Agg::Min: {
      if (matched.empty()) return res;  // null scalar
      bool all_numeric = true;
      for (const auto* v : matched)
        if (!parse_number(*v)) {
          all_numeric = false;
          break;
        }
      bool want_max = q.agg == Agg::Max;
      if (all_numeric) {
        double best = *parse_number(*matched[0]);
        for (const auto* v : matched) {
          double x = *parse_number(*v);
          if (want_max ? x > best : x < best) best = x;
        }
        res.number = best;
      } else {
        const std::string* best = matched[0];
        for (const auto* v : matched)
          if (want_max ? *v > *best : *v < *best) best = v;
        res.text = *best;
      }
      return res;
    }
    case Agg::Sum:
    case Agg::Avg: {
      if (matched.empty()) return res;  // null scalar
      double sum = 0.0;
      for (const auto* v : matched) {
        auto x = parse_number(*v);
        if (!x) return ExecutionResult::failure(ExecError::NonNumeric);
        sum += *x;
      }
      res.number = q.agg == Agg::Sum
                       ? sum
                       : sum / static_cast<double>(matched.size());
      return res;
    }
  }
  return ExecutionResult::failure(ExecError::InvalidQuery);
}

namespace {

// Canonical multiset key: numbers normalize so "3" and "3.0" collide.
std::string value_key(const std::string& v) {
  if (auto x = parse_number(v)) return "#" + format_double(*x);
  return "s" + v;
}

bool scalar_equal(const ExecutionResult& a, const ExecutionResult& b) {
  if (a.is_null_scalar() || b.is_null_scalar())
    return a.is_null_scalar() && b.is_null_scalar();
  auto num = [](const ExecutionResult& r) -> std::optional<double> {
    if (r.number) return r.number;
    if (r.text) return parse_number(*r.text);
    return std::nullopt;
  };
  auto na = num(a), nb = num(b);
  if (na && nb) return std::fabs(*na - *nb) <= 1e-9;
  if (a.text && b.text) return *a.text == *b.text;
  return false;
}

}  // namespace

bool results_equal(const ExecutionResult& a, const ExecutionResult& b) {
  if (!a.ok() || !b.ok()) return false;
  if (a.is_list != b.is_list) return false;
  if (!a.is_list) return scalar_equal(a, b);
  if (a.values.size() != b.values.size()) return false;
  std::map<std::string, int> counts;
  for (const auto& v : a.values) counts[value_key(v)]++;
  for (const auto& v : b.values)
    if (--counts[value_key(v)] < 0) return false;
  return true;
}

}  // namespace stamp
