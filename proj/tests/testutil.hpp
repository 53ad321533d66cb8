// SPDX-License-Identifier: Apache-2.0
#pragma once

// Shared fixtures for the test suites: deterministic small tables, random
// table/query generators, and a hand-audited metric fixture. Header-only so
// suites can include it without an extra link target.

#include <atomic>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "stamp/common.hpp"
#include "stamp/data.hpp"
#include "stamp/model.hpp"
#include "stamp/sqlast.hpp"
#include "stamp/table.hpp"
#include "stamp/text.hpp"
#include "stamp/training.hpp"

namespace stamp::testutil {

// Four-column roster: a slashed column name, duplicate numbers, and a value
// ("York") that lives under College but not under Player.
inline Table players_table() {
  return make_table("t", {"Player", "No.", "School/Club Team", "College"},
                    {{"Anna Christine Nalick", "3", "Duke", "Yale"},
                     {"Marcus Webb", "7", "Lakers", "York"},
                     {"Dell Curry", "3", "Charlotte", "Virginia Tech"}});
}

// Single-column table named t1 for the plain-SELECT serialization case.
inline Table t1_table() {
  return make_table("t1", {"Player"}, {{"Anna"}, {"Bob"}});
}

// ---------------------------------------------------------------------------
// Random tables and queries

inline const std::vector<std::string>& number_pool() {
  static const std::vector<std::string> pool = {
      "0",  "1",    "3",    "7",     "10",  "-4",
      "2.5", "10.5", "-0.75", "100", "1e2", "42"};
  return pool;
}

inline const std::vector<std::string>& word_pool() {
  static const std::vector<std::string> pool = {
      "york", "harvard", "duke", "red",  "blue",  "green", "alpha", "beta",
      "gamma", "delta",  "east", "west", "north", "lake",  "hill",  "stone"};
  return pool;
}

inline std::string random_text_value(Rng& rng) {
  const auto& words = word_pool();
  int n = rng.uniform_range(1, 3);
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out += " ";
    out += words[rng.uniform_int(static_cast<int>(words.size()))];
  }
  return out;
}

inline std::string random_number_value(Rng& rng) {
  const auto& nums = number_pool();
  return nums[rng.uniform_int(static_cast<int>(nums.size()))];
}

struct RandomTableOpts {
  int min_cols = 1;
  int max_cols = 6;
  int min_rows = 0;
  int max_rows = 10;
  double empty_cell_rate = 0.03;
};

// Columns are numeric, textual, or mixed; duplicate rows and cells are
// injected deliberately so multiset and tie cases occur often.
inline Table random_table(Rng& rng, const RandomTableOpts& o = {}) {
  static std::atomic<int> counter{0};
  int n_cols = rng.uniform_range(o.min_cols, o.max_cols);
  int n_rows = rng.uniform_range(o.min_rows, o.max_rows);
  std::vector<int> kind(n_cols);
  std::vector<std::string> header(n_cols);
  const auto& words = word_pool();
  for (int c = 0; c < n_cols; ++c) {
    kind[c] = rng.uniform_int(3);
    header[c] = words[rng.uniform_int(static_cast<int>(words.size()))] + " " +
                static_cast<char>('a' + c);
  }
  auto fresh_cell = [&](int c) -> std::string {
    if (rng.uniform01() < o.empty_cell_rate) return "";
    bool numeric = kind[c] == 0 || (kind[c] == 2 && rng.uniform01() < 0.5);
    return numeric ? random_number_value(rng) : random_text_value(rng);
  };
  std::vector<std::vector<std::string>> rows;
  for (int r = 0; r < n_rows; ++r) {
    if (r > 0 && rng.uniform01() < 0.2) {
      rows.push_back(rows[rng.uniform_int(r)]);
      continue;
    }
    std::vector<std::string> row(n_cols);
    for (int c = 0; c < n_cols; ++c) {
      if (r > 0 && rng.uniform01() < 0.2)
        row[c] = rows[rng.uniform_int(r)][c];
      else
        row[c] = fresh_cell(c);
    }
    rows.push_back(std::move(row));
  }
  return make_table("rt" + std::to_string(counter++), header, rows);
}

// Arbitrary query: indices occasionally out of range, values sometimes not
// cells, aggregators unrestricted. Exercises every executor failure path.
inline SqlQuery random_query(Rng& rng, const Table& t, int max_conds = 3) {
  SqlQuery q;
  q.agg = static_cast<Agg>(rng.uniform_int(6));
  q.sel = rng.uniform01() < 0.05 ? t.n_cols() : rng.uniform_int(t.n_cols());
  int n = rng.uniform_int(max_conds + 1);
  for (int i = 0; i < n; ++i) {
    Cond c;
    c.col = rng.uniform01() < 0.03 ? t.n_cols() : rng.uniform_int(t.n_cols());
    c.op = static_cast<CondOp>(rng.uniform_int(3));
    double pick = rng.uniform01();
    if (pick < 0.6 && t.n_rows() > 0 && c.col < t.n_cols())
      c.value = t.rows[rng.uniform_int(t.n_rows())][c.col].raw;
    else if (pick < 0.8)
      c.value = random_number_value(rng);
    else
      c.value = random_text_value(rng);
    q.conds.push_back(std::move(c));
  }
  return q;
}

// Query that passes validate(): in-range indices, condition values drawn
// from their columns' cells, numeric aggregates over numeric columns only.
inline SqlQuery random_valid_query(Rng& rng, const Table& t,
                                   int max_conds = 3) {
  SqlQuery q;
  q.sel = rng.uniform_int(t.n_cols());
  std::vector<Agg> aggs = {Agg::None, Agg::Max, Agg::Min, Agg::Count};
  if (t.column_all_numeric(q.sel)) {
    aggs.push_back(Agg::Sum);
    aggs.push_back(Agg::Avg);
  }
  q.agg = aggs[rng.uniform_int(static_cast<int>(aggs.size()))];
  int n = t.n_rows() > 0 ? rng.uniform_int(max_conds + 1) : 0;
  for (int i = 0; i < n; ++i) {
    Cond c;
    c.col = rng.uniform_int(t.n_cols());
    c.op = static_cast<CondOp>(rng.uniform_int(3));
    c.value = t.rows[rng.uniform_int(t.n_rows())][c.col].raw;
    q.conds.push_back(std::move(c));
  }
  return q;
}

// ---------------------------------------------------------------------------
// Model helpers

inline Example make_example(const std::string& question,
                            const std::string& table_id, SqlQuery gold) {
  return Example{tokenize(question), table_id, std::move(gold)};
}

inline Vocab build_vocab(const std::vector<Example>& examples,
                         const std::map<std::string, Table>& tables,
                         const ModelConfig& cfg) {
  return Vocab::build(examples, tables, cfg.ngram_min, cfg.ngram_max);
}

inline ModelParams seeded_params(const ModelConfig& cfg,
                                 const std::vector<Example>& examples,
                                 const std::map<std::string, Table>& tables,
                                 uint64_t seed) {
  Rng rng(seed);
  return init_params(cfg, build_vocab(examples, tables, cfg), rng);
}

// All-zero parameters: encoders emit zero states and every distribution is
// uniform, which makes closed-form checks possible.
inline ModelParams zero_params(const ModelConfig& cfg,
                               const std::vector<Example>& examples,
                               const std::map<std::string, Table>& tables) {
  return ModelParams(cfg, build_vocab(examples, tables, cfg));
}

// ---------------------------------------------------------------------------
// Scratch directories

inline std::filesystem::path fresh_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto d = std::filesystem::temp_directory_path() /
           ("stamp_" + tag + "_" + std::to_string(counter++));
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

// ---------------------------------------------------------------------------
// Hand-audited metric fixture
//
// Ten predictions over one table with per-example outcomes worked out by
// hand. Expected fractions:
//   acc_lf 0.1, acc_ex 0.4, acc_sel 0.7, acc_agg 0.7, acc_where 0.5,
//   pct_executable 0.8; buckets: #0 -> 0/1, #1 -> 3/8, #2 -> 1/1, #3+ empty.
// Error breakdown: wrong 6, wrong_sel 2, wrong_cond_count 1,
// wrong_where_cols 2.

struct MetricFixture {
  std::map<std::string, Table> tables;
  std::vector<Example> golds;
  std::vector<TokenSeq> preds;
};

inline MetricFixture metric_fixture() {
  MetricFixture f;
  Table t = make_table("ft", {"Name", "Wins", "Team", "Year"},
                       {{"Alice Jones", "3", "Reds", "2001"},
                        {"Bob Smith", "5", "Blues", "2002"},
                        {"Cara Diaz", "3", "Reds", "2003"},
                        {"Dan Wu", "8", "Greens", "2001"}});
  f.tables.emplace(t.id, t);

  auto add = [&](SqlQuery gold, std::optional<SqlQuery> pred_query,
                 TokenSeq raw_pred = {}) {
    f.golds.push_back(make_example("who and what", "ft", gold));
    if (pred_query) {
      auto seq = linearize(*pred_query, t);
      if (!seq) throw DataError("metric fixture prediction must linearize");
      f.preds.push_back(*seq);
    } else {
      f.preds.push_back(std::move(raw_pred));
    }
  };
  auto q = [](Agg a, int sel, std::vector<Cond> conds) {
    return SqlQuery{a, sel, std::move(conds)};
  };
  using C = Cond;

  // 0: exact match.                     lf ex sel agg where exec, bucket 1
  add(q(Agg::None, 0, {C{1, CondOp::Eq, "3"}}),
      q(Agg::None, 0, {C{1, CondOp::Eq, "3"}}));
  // 1: reordered conditions.            ex sel agg where exec, bucket 2
  add(q(Agg::None, 0, {C{2, CondOp::Eq, "Reds"}, C{3, CondOp::Eq, "2001"}}),
      q(Agg::None, 0, {C{3, CondOp::Eq, "2001"}, C{2, CondOp::Eq, "Reds"}}));
  // 2: wrong aggregator.                sel where exec, bucket 1
  add(q(Agg::Count, 0, {C{2, CondOp::Eq, "Reds"}}),
      q(Agg::Max, 0, {C{2, CondOp::Eq, "Reds"}}));
  // 3: malformed prediction.            nothing, bucket 1
  add(q(Agg::None, 1, {C{0, CondOp::Eq, "Bob Smith"}}), std::nullopt,
      TokenSeq{DecoderToken::keyword(Keyword::Select), DecoderToken::end()});
  // 4: parsed but invalid (SUM over text). agg where, bucket 0
  add(q(Agg::Sum, 1, {}), q(Agg::Sum, 2, {}));
  // 5: wrong WHERE column.              sel agg exec, bucket 1
  add(q(Agg::None, 2, {C{3, CondOp::Eq, "2001"}}),
      q(Agg::None, 2, {C{1, CondOp::Eq, "3"}}));
  // 6: wrong sel and an extra condition. agg exec, bucket 1
  add(q(Agg::Count, 0, {C{2, CondOp::Eq, "Reds"}}),
      q(Agg::Count, 3, {C{2, CondOp::Eq, "Reds"}, C{1, CondOp::Eq, "5"}}));
  // 7: wrong operator.                  sel agg exec, bucket 1
  add(q(Agg::Count, 0, {C{1, CondOp::Gt, "3"}}),
      q(Agg::Count, 0, {C{1, CondOp::Lt, "3"}}));
  // 8: extra condition, same result.    ex sel agg exec, bucket 1
  add(q(Agg::None, 0, {C{2, CondOp::Eq, "Reds"}}),
      q(Agg::None, 0, {C{2, CondOp::Eq, "Reds"}, C{1, CondOp::Eq, "3"}}));
  // 9: different aggregator, same result. ex sel where exec, bucket 1
  add(q(Agg::Max, 1, {C{0, CondOp::Eq, "Dan Wu"}}),
      q(Agg::Min, 1, {C{0, CondOp::Eq, "Dan Wu"}}));

  return f;
}

}  // namespace stamp::testutil
