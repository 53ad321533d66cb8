// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <map>
#include <set>

#include "json.hpp"
#include "stamp/eval.hpp"
#include "stamp/model.hpp"
#include "testutil.hpp"

using namespace stamp;
namespace tu = stamp::testutil;

namespace {

TokenSeq must_linearize(const SqlQuery& q, const Table& t) {
  auto seq = linearize(q, t);
  REQUIRE(seq.has_value());
  return *seq;
}

std::vector<double> fractions(const EvalReport& r) {
  return {r.acc_lf, r.acc_ex,    r.acc_sel,
          r.acc_agg, r.acc_where, r.pct_executable};
}

}  // namespace

TEST_CASE("perfect predictions score one everywhere") {
  Table t = tu::players_table();
  std::map<std::string, Table> tables{{t.id, t}};
  std::vector<SqlQuery> queries{
      {Agg::None, 0, {Cond{1, CondOp::Eq, "3"}}},
      {Agg::Count, 2, {}},
      {Agg::Max, 1, {Cond{2, CondOp::Eq, "Duke"}}}};
  std::vector<Example> golds;
  std::vector<TokenSeq> preds;
  for (const SqlQuery& q : queries) {
    golds.push_back(tu::make_example("who what", "t", q));
    preds.push_back(must_linearize(q, t));
  }
  EvalReport r = evaluate(preds, golds, tables);
  CHECK(r.total == 3);
  for (double x : fractions(r)) CHECK(x == 1.0);
  CHECK(r.bucket_total[0] == 1);
  CHECK(r.bucket_total[1] == 2);
  CHECK(r.bucket_correct[1] == 2);
  CHECK(r.bucket_acc(1) == 1.0);
  CHECK(r.bucket_acc(3) == -1.0);

  ErrorBreakdown eb = error_breakdown(preds, golds, tables);
  CHECK(eb.wrong == 0);
  CHECK(eb.wrong_sel == 0);
  CHECK(eb.wrong_cond_count == 0);
  CHECK(eb.wrong_where_cols == 0);
}

TEST_CASE("reordered conditions keep execution but lose logical form") {
  Table t = tu::players_table();
  std::map<std::string, Table> tables{{t.id, t}};
  SqlQuery gold{Agg::None, 0,
                {Cond{1, CondOp::Eq, "3"}, Cond{2, CondOp::Eq, "Duke"}}};
  SqlQuery swapped{Agg::None, 0,
                   {Cond{2, CondOp::Eq, "Duke"}, Cond{1, CondOp::Eq, "3"}}};
  std::vector<Example> golds{tu::make_example("q", "t", gold)};
  std::vector<TokenSeq> preds{must_linearize(swapped, t)};
  EvalReport r = evaluate(preds, golds, tables);
  CHECK(r.acc_lf == 0.0);
  CHECK(r.acc_ex == 1.0);
  CHECK(r.acc_where == 1.0);
  CHECK(r.acc_sel == 1.0);
  CHECK(r.acc_agg == 1.0);
}

TEST_CASE("the audited ten-example fixture scores exactly") {
  tu::MetricFixture f = tu::metric_fixture();
  EvalReport r = evaluate(f.preds, f.golds, f.tables);
  CHECK(r.total == 10);
  CHECK(r.acc_lf == 0.1);
  CHECK(r.acc_ex == 0.4);
  CHECK(r.acc_sel == 0.7);
  CHECK(r.acc_agg == 0.7);
  CHECK(r.acc_where == 0.5);
  CHECK(r.pct_executable == 0.8);
  CHECK(r.bucket_total[0] == 1);
  CHECK(r.bucket_correct[0] == 0);
  CHECK(r.bucket_acc(0) == 0.0);
  CHECK(r.bucket_total[1] == 8);
  CHECK(r.bucket_correct[1] == 3);
  CHECK(r.bucket_acc(1) == 3.0 / 8.0);
  CHECK(r.bucket_total[2] == 1);
  CHECK(r.bucket_correct[2] == 1);
  CHECK(r.bucket_acc(2) == 1.0);
  CHECK(r.bucket_total[3] == 0);
  CHECK(r.bucket_acc(3) == -1.0);

  ErrorBreakdown eb = error_breakdown(f.preds, f.golds, f.tables);
  CHECK(eb.wrong == 6);
  CHECK(eb.wrong_sel == 2);
  CHECK(eb.wrong_cond_count == 1);
  CHECK(eb.wrong_where_cols == 2);
}

TEST_CASE("scores are invariant to example order") {
  tu::MetricFixture f = tu::metric_fixture();
  EvalReport base = evaluate(f.preds, f.golds, f.tables);
  Rng rng(4);
  std::vector<size_t> order(f.golds.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int trial = 0; trial < 5; ++trial) {
    rng.shuffle(order);
    std::vector<Example> golds;
    std::vector<TokenSeq> preds;
    for (size_t i : order) {
      golds.push_back(f.golds[i]);
      preds.push_back(f.preds[i]);
    }
    EvalReport r = evaluate(preds, golds, f.tables);
    CHECK(fractions(r) == fractions(base));
    CHECK(r.bucket_total == base.bucket_total);
    CHECK(r.bucket_correct == base.bucket_correct);
  }
}

TEST_CASE("replacing any prediction with junk never raises a fraction") {
  tu::MetricFixture f = tu::metric_fixture();
  EvalReport base = evaluate(f.preds, f.golds, f.tables);
  TokenSeq junk{DecoderToken::keyword(Keyword::Select), DecoderToken::end()};
  for (size_t i = 0; i < f.preds.size(); ++i) {
    std::vector<TokenSeq> preds = f.preds;
    preds[i] = junk;
    EvalReport r = evaluate(preds, f.golds, f.tables);
    std::vector<double> now = fractions(r);
    std::vector<double> was = fractions(base);
    for (size_t k = 0; k < now.size(); ++k) CHECK(now[k] <= was[k]);
  }
}

TEST_CASE("the error breakdown matches an independent recount") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    Table t = tu::random_table(rng, {2, 5, 1, 6});
    std::map<std::string, Table> tables{{t.id, t}};
    std::vector<Example> golds;
    std::vector<TokenSeq> preds;
    for (int i = 0; i < 8; ++i) {
      golds.push_back(tu::make_example("filler question", t.id,
                                       tu::random_valid_query(rng, t)));
      if (rng.uniform01() < 0.15) {
        preds.push_back(TokenSeq{DecoderToken::keyword(Keyword::Select),
                                 DecoderToken::end()});
      } else {
        SqlQuery q = tu::random_valid_query(rng, t);
        preds.push_back(must_linearize(q, t));
      }
    }

    ErrorBreakdown eb = error_breakdown(preds, golds, tables);
    int wrong = 0, wrong_sel = 0, wrong_count = 0, wrong_cols = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
      const Table& table = tables.at(golds[i].table_id);
      auto parsed = delinearize(preds[i], table, &golds[i].question);
      bool ex = false;
      if (std::holds_alternative<SqlQuery>(parsed)) {
        const SqlQuery& q = std::get<SqlQuery>(parsed);
        if (validate(q, table) == InvalidReason::None) {
          ExecutionResult pr = execute(q, table);
          ex = pr.ok() && results_equal(pr, execute(golds[i].gold, table));
        }
      }
      if (ex) continue;
      ++wrong;
      if (std::holds_alternative<SqlQuery>(parsed)) {
        const SqlQuery& q = std::get<SqlQuery>(parsed);
        if (q.sel != golds[i].gold.sel) ++wrong_sel;
        if (q.conds.size() != golds[i].gold.conds.size()) ++wrong_count;
        std::set<int> pc, gc;
        for (const Cond& c : q.conds) pc.insert(c.col);
        for (const Cond& c : golds[i].gold.conds) gc.insert(c.col);
        if (pc != gc) ++wrong_cols;
      }
    }
    CHECK(eb.wrong == wrong);
    CHECK(eb.wrong_sel == wrong_sel);
    CHECK(eb.wrong_cond_count == wrong_count);
    CHECK(eb.wrong_where_cols == wrong_cols);
  }
}

TEST_CASE("evaluation rejects mismatched inputs") {
  tu::MetricFixture f = tu::metric_fixture();
  std::vector<TokenSeq> short_preds(f.preds.begin(), f.preds.end() - 1);
  CHECK_THROWS_AS(evaluate(short_preds, f.golds, f.tables), DataError);

  std::vector<Example> golds = f.golds;
  golds[0].table_id = "missing";
  CHECK_THROWS_AS(evaluate(f.preds, golds, f.tables), DataError);
  CHECK_THROWS_AS(error_breakdown(short_preds, f.golds, f.tables), DataError);
}

TEST_CASE("the json report round trips with bucket details") {
  tu::MetricFixture f = tu::metric_fixture();
  EvalReport r = evaluate(f.preds, f.golds, f.tables);
  std::string text = report_to_json(r);
  REQUIRE_FALSE(text.empty());
  CHECK(text.back() == '\n');
  auto j = nlohmann::json::parse(text);
  CHECK(j["total"] == 10);
  CHECK(j["acc_lf"] == 0.1);
  CHECK(j["acc_ex"] == 0.4);
  CHECK(j["acc_sel"] == 0.7);
  CHECK(j["acc_agg"] == 0.7);
  CHECK(j["acc_where"] == 0.5);
  CHECK(j["pct_executable"] == 0.8);
  CHECK(j["buckets"]["1"]["total"] == 8);
  CHECK(j["buckets"]["1"]["correct"] == 3);
  CHECK(j["buckets"]["1"]["acc_ex"] == 0.375);
  CHECK(j["buckets"]["3+"]["total"] == 0);
  CHECK_FALSE(j["buckets"]["3+"].contains("acc_ex"));
}

TEST_CASE("the text report lists every metric and bucket") {
  tu::MetricFixture f = tu::metric_fixture();
  EvalReport r = evaluate(f.preds, f.golds, f.tables);
  std::string text = report_to_text(r);
  for (const char* needle :
       {"examples", "acc_lf", "acc_ex", "acc_sel", "acc_agg", "acc_where",
        "pct_executable", "#where", "0.1000", "0.3750", "3+"})
    CHECK(text.find(needle) != std::string::npos);
  // The empty 3+ bucket prints a dash instead of an accuracy.
  CHECK(text.find("3+") != std::string::npos);
  CHECK(text.find('-') != std::string::npos);
}

TEST_CASE("predict_all decodes exactly like per-example greedy") {
  Table t = tu::players_table();
  std::map<std::string, Table> tables{{t.id, t}};
  std::vector<Example> exs{
      tu::make_example("who wears number three", "t",
                       SqlQuery{Agg::None, 0, {Cond{1, CondOp::Eq, "3"}}}),
      tu::make_example("who went to duke", "t",
                       SqlQuery{Agg::None, 0, {Cond{2, CondOp::Eq, "Duke"}}}),
      tu::make_example("how many players", "t", SqlQuery{Agg::Count, 0, {}})};
  ModelConfig cfg;
  cfg.h = 4;
  cfg.d_word = 6;
  cfg.d_sub = 4;
  ModelParams p = tu::seeded_params(cfg, exs, tables, 20);
  Tape tape;
  std::vector<TokenSeq> batch = predict_all(tape, p, exs, tables);
  REQUIRE(batch.size() == exs.size());
  for (size_t i = 0; i < exs.size(); ++i) {
    Tape own;
    DecodeResult d = decode_greedy(own, p, exs[i].question, t);
    CHECK(batch[i] == d.seq);
  }
}
