// SPDX-License-Identifier: Apache-2.0
#include "stamp/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "stamp/common.hpp"

namespace stamp {

namespace {

// Order-insensitive condition key: sorted (col, op, lowercase value) triples.
std::vector<std::tuple<int, int, std::string>> cond_multiset(
    const SqlQuery& q) {
  std::vector<std::tuple<int, int, std::string>> out;
  out.reserve(q.conds.size());
  for (const Cond& c : q.conds)
    out.emplace_back(c.col, static_cast<int>(c.op), lower_copy(c.value));
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> cond_column_set(const SqlQuery& q) {
  std::vector<int> cols;
  for (const Cond& c : q.conds) cols.push_back(c.col);
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  return cols;
}

struct Scored {
  bool parsed = false;
  bool executable = false;
  bool lf = false;
  bool ex = false;
  bool sel = false;
  bool agg = false;
  bool where = false;
  SqlQuery query;
};

Scored score_one(const TokenSeq& pred, const Example& ex, const Table& t) {
  Scored s;
  auto parsed = delinearize(pred, t, &ex.question);
  if (std::holds_alternative<Malformed>(parsed)) return s;
  s.parsed = true;
  s.query = std::get<SqlQuery>(parsed);
  ExecutionResult pred_res = execute(s.query, t);
  s.executable = validate(s.query, t) == InvalidReason::None && pred_res.ok();
  s.lf = serialize(s.query, t) == serialize(ex.gold, t);
  s.ex = results_equal(pred_res, execute(ex.gold, t));
  s.sel = s.query.sel == ex.gold.sel;
  s.agg = s.query.agg == ex.gold.agg;
  s.where = cond_multiset(s.query) == cond_multiset(ex.gold);
  return s;
}

const Table& table_of(const Example& ex,
                      const std::map<std::string, Table>& tables) {
  auto it = tables.find(ex.table_id);
  if (it == tables.end()) throw DataError("unknown table id: " + ex.table_id);
  return it->second;
}

}  // namespace

double EvalReport::bucket_acc(int b) const {
  if (b < 0 || b >= 4 || bucket_total[b] == 0) return -1.0;
  return static_cast<double>(bucket_correct[b]) / bucket_total[b];
}

EvalReport evaluate(const std::vector<TokenSeq>& preds,
                    const std::vector<Example>& golds,
                    const std::map<std::string, Table>& tables) {
  if (preds.size() != golds.size())
    throw DataError("prediction/gold count mismatch");
  EvalReport r;
  r.total = static_cast<int>(golds.size());
  if (r.total == 0) return r;
  int n_lf = 0, n_ex = 0, n_sel = 0, n_agg = 0, n_where = 0, n_exec = 0;
  for (size_t i = 0; i < golds.size(); ++i) {
    const Table& t = table_of(golds[i], tables);
    Scored s = score_one(preds[i], golds[i], t);
    n_lf += s.lf;
    n_ex += s.ex;
    n_sel += s.sel;
    n_agg += s.agg;
    n_where += s.where;
    n_exec += s.executable;
    int b = std::min<int>(static_cast<int>(golds[i].gold.conds.size()), 3);
    r.bucket_total[b] += 1;
    r.bucket_correct[b] += s.ex;
  }
  double n = static_cast<double>(r.total);
  r.acc_lf = n_lf / n;
  r.acc_ex = n_ex / n;
  r.acc_sel = n_sel / n;
  r.acc_agg = n_agg / n;
  r.acc_where = n_where / n;
  r.pct_executable = n_exec / n;
  return r;
}

ErrorBreakdown error_breakdown(const std::vector<TokenSeq>& preds,
                               const std::vector<Example>& golds,
                               const std::map<std::string, Table>& tables) {
  if (preds.size() != golds.size())
    throw DataError("prediction/gold count mismatch");
  ErrorBreakdown b;
  for (size_t i = 0; i < golds.size(); ++i) {
    const Table& t = table_of(golds[i], tables);
    Scored s = score_one(preds[i], golds[i], t);
    if (s.ex) continue;
    b.wrong += 1;
    if (!s.parsed) continue;
    if (s.query.sel != golds[i].gold.sel) b.wrong_sel += 1;
    if (s.query.conds.size() != golds[i].gold.conds.size())
      b.wrong_cond_count += 1;
    if (cond_column_set(s.query) != cond_column_set(golds[i].gold))
      b.wrong_where_cols += 1;
  }
  return b;
}

std::vector<TokenSeq> predict_all(Tape& tape, ModelParams& p,
                                  const std::vector<Example>& examples,
                                  const std::map<std::string, Table>& tables) {
  std::vector<TokenSeq> preds;
  preds.reserve(examples.size());
  for (const Example& ex : examples)
    preds.push_back(
        decode_greedy(tape, p, ex.question, table_of(ex, tables)).seq);
  return preds;
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["total"] = r.total;
  j["acc_lf"] = r.acc_lf;
  j["acc_ex"] = r.acc_ex;
  j["acc_sel"] = r.acc_sel;
  j["acc_agg"] = r.acc_agg;
  j["acc_where"] = r.acc_where;
  j["pct_executable"] = r.pct_executable;
  static const char* kBucketNames[] = {"0", "1", "2", "3+"};
  nlohmann::ordered_json buckets;
  for (int b = 0; b < 4; ++b) {
    nlohmann::ordered_json e;
    e["total"] = r.bucket_total[b];
    e["correct"] = r.bucket_correct[b];
    if (r.bucket_total[b] > 0) e["acc_ex"] = r.bucket_acc(b);
    buckets[kBucketNames[b]] = e;
  }
  j["buckets"] = buckets;
  return j.dump(2) + "\n";
}

std::string report_to_text(const EvalReport& r) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "examples        %6d\n", r.total);
  os << line;
  auto row = [&](const char* name, double v) {
    std::snprintf(line, sizeof line, "%-15s %6.4f\n", name, v);
    os << line;
  };
  row("acc_lf", r.acc_lf);
  row("acc_ex", r.acc_ex);
  row("acc_sel", r.acc_sel);
  row("acc_agg", r.acc_agg);
  row("acc_where", r.acc_where);
  row("pct_executable", r.pct_executable);
  os << "#where  examples  acc_ex\n";
  static const char* kBucketNames[] = {"0", "1", "2", "3+"};
  for (int b = 0; b < 4; ++b) {
    if (r.bucket_total[b] == 0) {
      std::snprintf(line, sizeof line, "%-7s %8d       -\n", kBucketNames[b],
                    0);
    } else {
      std::snprintf(line, sizeof line, "%-7s %8d  %6.4f\n", kBucketNames[b],
                    r.bucket_total[b], r.bucket_acc(b));
    }
    os << line;
  }
  return os.str();
}

}  // namespace stamp
