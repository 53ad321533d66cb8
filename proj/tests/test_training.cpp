// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "stamp/checkpoint.hpp"
#include "stamp/model.hpp"
#include "stamp/training.hpp"
#include "testutil.hpp"

using namespace stamp;
namespace tu = stamp::testutil;

namespace {

ModelConfig tiny_config(int h = 8) {
  ModelConfig cfg;
  cfg.h = h;
  cfg.d_word = 6;
  cfg.d_sub = 4;
  cfg.max_len = 24;
  return cfg;
}

struct Fixture {
  Table table = tu::players_table();
  std::map<std::string, Table> tables{{table.id, table}};
  std::vector<Example> train{
      tu::make_example("who wears number three", "t",
                       SqlQuery{Agg::None, 0, {Cond{1, CondOp::Eq, "3"}}}),
      tu::make_example("who went to duke", "t",
                       SqlQuery{Agg::None, 0, {Cond{2, CondOp::Eq, "Duke"}}}),
      tu::make_example("how many players are there", "t",
                       SqlQuery{Agg::Count, 0, {}}),
      tu::make_example("college of the lakers player", "t",
                       SqlQuery{Agg::None, 3, {Cond{2, CondOp::Eq, "Lakers"}}})};
};

bool all_finite(ModelParams& p) {
  for (Param* prm : p.all())
    for (double x : prm->w.data)
      if (!std::isfinite(x)) return false;
  return true;
}

bool same_weights(ModelParams& a, ModelParams& b) {
  auto pa = a.all(), pb = b.all();
  if (pa.size() != pb.size()) return false;
  for (size_t i = 0; i < pa.size(); ++i)
    if (pa[i]->w.data != pb[i]->w.data) return false;
  return true;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("initialization is bounded, zero-biased, and seed-deterministic") {
  Fixture f;
  Vocab v = tu::build_vocab(f.train, f.tables, tiny_config());
  Rng r1(42), r2(42), r3(43);
  ModelParams a = init_params(tiny_config(), v, r1);
  ModelParams b = init_params(tiny_config(), v, r2);
  ModelParams c = init_params(tiny_config(), v, r3);
  CHECK(same_weights(a, b));
  CHECK_FALSE(same_weights(a, c));

  for (Param* bias : {&a.q_fwd.bz, &a.q_fwd.br, &a.q_fwd.bh, &a.u_bwd.bz,
                      &a.dec.bz, &a.dec.br, &a.dec.bh, &a.b_gate})
    for (double x : bias->w.data) CHECK(x == 0.0);

  for (Param* prm : a.all()) {
    double bound = std::sqrt(6.0 / (prm->w.rows + prm->w.cols));
    double max_abs = 0.0;
    for (double x : prm->w.data) max_abs = std::max(max_abs, std::fabs(x));
    CHECK(max_abs <= bound);
  }
  double w_sum = 0.0;
  for (double x : a.w_gate.w.data) w_sum += std::fabs(x);
  CHECK(w_sum > 0.0);
}

TEST_CASE("initialization draws have near-zero mean at scale") {
  Fixture f;
  Vocab v = tu::build_vocab(f.train, f.tables, tiny_config());
  Rng rng(7);
  ModelParams p = init_params(tiny_config(100), v, rng);
  REQUIRE(p.dec.uz.w.rows == 200);
  REQUIRE(p.dec.uz.w.cols == 200);
  double mean = 0.0;
  for (double x : p.dec.uz.w.data) mean += x;
  mean /= p.dec.uz.w.data.size();
  // Uniform(-b, b): sd of the mean of 40000 draws is b / (sqrt(3) * 200).
  double b = std::sqrt(6.0 / 400);
  double sigma = b / (std::sqrt(3.0) * 200.0);
  CHECK(std::fabs(mean) <= 3.0 * sigma);
}

TEST_CASE("training overfits a single example") {
  Fixture f;
  std::vector<Example> one{f.train[1]};
  ModelParams p = tu::seeded_params(tiny_config(), one, f.tables, 5);
  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.lr = 0.3;
  cfg.epochs = 300;
  cfg.seed = 5;
  TrainResult r = mle_train(std::move(p), one, {}, f.tables, cfg);
  CHECK_FALSE(r.aborted);
  CHECK(r.filtered == 0);
  REQUIRE_FALSE(r.history.empty());
  // The loss floor is the cell step: its probability mixes the trainable
  // attention with the fixed overlap prior, and the prior assigns the gold
  // cell softmax([1,0,0]) = e/(e+2) over the three rows of its column.
  const double prior = std::exp(1.0) / (std::exp(1.0) + 2.0);
  const double floor = -std::log(0.5 + 0.5 * prior);
  CHECK(r.history.back().train_loss < floor + 0.03);

  Tape tape;
  DecodeResult d = decode_greedy(tape, r.params, one[0].question, f.table);
  auto gold = linearize(one[0].gold, f.table);
  REQUIRE(gold.has_value());
  CHECK(d.seq == *gold);
}

TEST_CASE("one small step lowers the loss") {
  Fixture f;
  ModelParams p = tu::seeded_params(tiny_config(), f.train, f.tables, 8);
  TrainConfig cfg;
  cfg.batch_size = 16;  // whole set in one batch
  cfg.lr = 1e-3;
  cfg.epochs = 2;
  TrainResult r = mle_train(std::move(p), f.train, {}, f.tables, cfg);
  REQUIRE(r.history.size() == 2);
  CHECK(r.history[1].train_loss < r.history[0].train_loss);
}

TEST_CASE("duplicating an example in a batch matches the single run") {
  Fixture f;
  ModelParams p = tu::seeded_params(tiny_config(), f.train, f.tables, 10);
  ModelParams q = p;

  std::vector<Example> once{f.train[0]};
  std::vector<Example> twice{f.train[0], f.train[0]};
  TrainConfig ca;
  ca.batch_size = 1;
  ca.lr = 0.05;
  ca.epochs = 1;
  TrainConfig cb = ca;
  cb.batch_size = 2;
  TrainResult ra = mle_train(std::move(p), once, {}, f.tables, ca);
  TrainResult rb = mle_train(std::move(q), twice, {}, f.tables, cb);
  // Gradients accumulate example by example, so the doubled batch sums its
  // contributions in a different order; agreement is to rounding error, not
  // bitwise.
  auto pa = ra.params.all(), pb = rb.params.all();
  REQUIRE(pa.size() == pb.size());
  double worst = 0.0;
  for (size_t i = 0; i < pa.size(); ++i)
    for (size_t j = 0; j < pa[i]->w.data.size(); ++j)
      worst = std::max(worst,
                       std::fabs(pa[i]->w.data[j] - pb[i]->w.data[j]));
  CHECK(worst <= 1e-12);
  CHECK(ra.history[0].train_loss ==
        doctest::Approx(rb.history[0].train_loss).epsilon(1e-12));
}

TEST_CASE("training is deterministic and records history") {
  Fixture f;
  std::vector<Example> dev{f.train[0], f.train[2]};
  auto dir = tu::fresh_dir("train_det");
  auto run = [&](const std::string& tag) {
    ModelParams p = tu::seeded_params(tiny_config(), f.train, f.tables, 3);
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.lr = 0.05;
    cfg.epochs = 3;
    cfg.seed = 17;
    cfg.history_path = (dir / (tag + ".jsonl")).string();
    cfg.checkpoint_path = (dir / (tag + ".ckpt")).string();
    return mle_train(std::move(p), f.train, dev, f.tables, cfg);
  };
  TrainResult a = run("a");
  TrainResult b = run("b");
  CHECK(same_weights(a.params, b.params));
  CHECK(a.best_epoch == b.best_epoch);
  CHECK(a.best_dev_acc_ex == b.best_dev_acc_ex);
  CHECK(slurp((dir / "a.jsonl").string()) == slurp((dir / "b.jsonl").string()));

  // History is one JSON object per epoch with the fixed key set.
  std::istringstream hist(slurp((dir / "a.jsonl").string()));
  std::string line;
  int lines = 0;
  while (std::getline(hist, line)) {
    auto j = nlohmann::json::parse(line);
    CHECK(j.contains("epoch"));
    CHECK(j.contains("train_loss"));
    CHECK(j.contains("dev_acc_lf"));
    CHECK(j.contains("dev_acc_ex"));
    CHECK(j.contains("lr"));
    ++lines;
  }
  CHECK(lines == 3);

  // The best epoch holds the maximum dev execution accuracy.
  double best = -1.0;
  for (const EpochStats& s : a.history) best = std::max(best, s.dev_acc_ex);
  CHECK(a.best_dev_acc_ex == best);

  // The saved checkpoint reloads to the returned parameters.
  ModelParams re = ModelParams::from_checkpoint(
      load_checkpoint((dir / "a.ckpt").string()));
  CHECK(same_weights(a.params, re));
}

TEST_CASE("embedding clamping holds after training") {
  Fixture f;
  ModelConfig mc = tiny_config();
  mc.emb_clamp = 0.02;
  ModelParams p = tu::seeded_params(mc, f.train, f.tables, 2);
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.lr = 0.5;
  cfg.epochs = 5;
  TrainResult r = mle_train(std::move(p), f.train, {}, f.tables, cfg);
  for (double x : r.params.emb.word.w.data) CHECK(std::fabs(x) <= 0.02);
  for (double x : r.params.emb.sub.w.data) CHECK(std::fabs(x) <= 0.02);
}

TEST_CASE("unlinearizable golds are filtered with a count") {
  Fixture f;
  std::vector<Example> data{
      f.train[0],
      tu::make_example("york is not a cell of the school column", "t",
                       SqlQuery{Agg::None, 0, {Cond{2, CondOp::Eq, "York"}}})};
  ModelParams p = tu::seeded_params(tiny_config(), data, f.tables, 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  TrainResult r = mle_train(std::move(p), data, {}, f.tables, cfg);
  CHECK(r.filtered == 1);

  ModelParams q = tu::seeded_params(tiny_config(), data, f.tables, 1);
  std::vector<Example> only_bad{data[1]};
  CHECK_THROWS_AS(mle_train(std::move(q), only_bad, {}, f.tables, cfg),
                  DataError);
}

TEST_CASE("where-shuffle augmentation multiplies the items trained") {
  Fixture f;
  std::vector<Example> two_conds{tu::make_example(
      "which duke player wears number three", "t",
      SqlQuery{Agg::None, 0,
               {Cond{1, CondOp::Eq, "3"}, Cond{2, CondOp::Eq, "Duke"}}})};
  for (bool aug : {false, true}) {
    ModelParams p = tu::seeded_params(tiny_config(), two_conds, f.tables, 4);
    TrainConfig cfg;
    cfg.batch_size = 1;
    cfg.lr = 1e-4;
    cfg.epochs = 1;
    cfg.shuffle_where = aug;
    TrainResult r = mle_train(std::move(p), two_conds, {}, f.tables, cfg);
    // One batch per item: the mean epoch loss divides by the item count,
    // which doubles with the augmentation.
    CHECK_FALSE(r.aborted);
    CHECK(r.filtered == 0);
    (void)r;
  }
  // The item count is visible through determinism: augmented and plain runs
  // diverge after one epoch even at negligible learning rate.
  ModelParams pa = tu::seeded_params(tiny_config(), two_conds, f.tables, 4);
  ModelParams pb = pa;
  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.lr = 0.05;
  cfg.epochs = 1;
  cfg.shuffle_where = false;
  TrainResult ra = mle_train(std::move(pa), two_conds, {}, f.tables, cfg);
  cfg.shuffle_where = true;
  TrainResult rb = mle_train(std::move(pb), two_conds, {}, f.tables, cfg);
  CHECK_FALSE(same_weights(ra.params, rb.params));
}

TEST_CASE("a huge learning rate aborts instead of emitting junk") {
  Fixture f;
  ModelParams p = tu::seeded_params(tiny_config(), f.train, f.tables, 6);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.lr = 1e150;
  cfg.epochs = 10;
  TrainResult r = mle_train(std::move(p), f.train, {}, f.tables, cfg);
  CHECK(r.aborted);
  CHECK(static_cast<int>(r.history.size()) < cfg.epochs);
  CHECK(all_finite(r.params));
}

TEST_CASE("rewards rank predictions by execution outcome") {
  Fixture f;
  SqlQuery gold{Agg::None, 0, {Cond{1, CondOp::Eq, "7"}}};  // Marcus Webb

  auto gold_seq = linearize(gold, f.table);
  REQUIRE(gold_seq.has_value());
  CHECK(reward(*gold_seq, gold, f.table) == kRewardCorrect);

  // A different query with the same result also earns +1.
  auto other = linearize(SqlQuery{Agg::None, 0, {Cond{3, CondOp::Eq, "York"}}},
                         f.table);
  REQUIRE(other.has_value());
  CHECK(reward(*other, gold, f.table) == kRewardCorrect);

  // Valid but wrong answer: -1.
  auto wrong = linearize(SqlQuery{Agg::None, 0, {Cond{1, CondOp::Eq, "3"}}},
                         f.table);
  REQUIRE(wrong.has_value());
  CHECK(reward(*wrong, gold, f.table) == kRewardWrongAnswer);

  // Malformed: -2.
  TokenSeq malformed{DecoderToken::keyword(Keyword::Select),
                     DecoderToken::end()};
  CHECK(reward(malformed, gold, f.table) == kRewardInvalid);

  // Parses but fails validation (SUM over text): -2.
  TokenSeq invalid{DecoderToken::keyword(Keyword::Select),
                   DecoderToken::keyword(Keyword::Sum), DecoderToken::column(0),
                   DecoderToken::end()};
  CHECK(reward(invalid, gold, f.table) == kRewardInvalid);
}

TEST_CASE("the reinforce baseline absorbs constant rewards") {
  Fixture f;
  // Rig a model so peaked that every sample is the malformed [End].
  std::vector<Example> one{f.train[2]};
  ModelParams p = tu::zero_params(tiny_config(), one, f.tables);
  p.b_gate.w.at(0, 0) = 50.0;
  p.w_sql.w.at(0, p.cfg.state()) = 1.0;
  p.v_sql.w.at(0, 0) = 20.0;  // tanh caps the hidden layer, v peaks the score
  p.e_sql.w.at(kEndIndex, 0) = 20.0;

  RLConfig ca;
  ca.k = 5;
  ca.rl_lr = 0.01;
  ca.beta = 0.0;
  ca.seed = 9;
  ca.rl_epochs = 1;
  RLConfig cb = ca;
  cb.rl_epochs = 2;

  ModelParams pa = p;
  ModelParams pb = p;
  RLResult ra = rl_finetune(std::move(pa), one, {}, f.tables, ca);
  RLResult rb = rl_finetune(std::move(pb), one, {}, f.tables, cb);

  REQUIRE(ra.mean_rewards.size() == 1);
  REQUIRE(rb.mean_rewards.size() == 2);
  CHECK(ra.mean_rewards[0] == -2.0);
  CHECK(rb.mean_rewards[1] == -2.0);
  CHECK(ra.baseline == -2.0);
  CHECK(rb.baseline == -2.0);
  // Epoch two sees reward == baseline everywhere, so its update is exactly
  // zero and the parameters match the one-epoch run bitwise.
  CHECK(same_weights(ra.params, rb.params));
}

TEST_CASE("reinforce raises the probability of the rewarded sequence") {
  // One column, zero rows: the grammar offers exactly six sequences (bare
  // select plus five aggregates) and only the bare select earns +1.
  Table t = make_table("bandit", {"v"}, {});
  std::map<std::string, Table> tabs{{"bandit", t}};
  std::vector<Example> train{
      tu::make_example("list v", "bandit", SqlQuery{Agg::None, 0, {}})};

  ModelConfig mc = tiny_config();
  mc.grammar_mask = true;
  ModelParams p = tu::seeded_params(mc, train, tabs, 12);
  auto gold_seq = linearize(train[0].gold, t);
  REQUIRE(gold_seq.has_value());

  auto gold_prob = [&](ModelParams& m) {
    Tape tape;
    EncodedContext ctx = encode(tape, m, train[0].question, t);
    return std::exp(sequence_log_prob(tape, m, ctx, *gold_seq).total);
  };

  double before = gold_prob(p);
  double prev = before;
  for (int round = 0; round < 6; ++round) {
    RLConfig cfg;
    cfg.k = 8;
    cfg.rl_lr = 0.3;
    cfg.beta = 0.0;
    cfg.rl_epochs = 1;
    cfg.seed = 100 + round;
    RLResult r = rl_finetune(std::move(p), train, {}, tabs, cfg);
    CHECK_FALSE(r.aborted);
    CHECK(r.skipped == 0);
    p = std::move(r.params);
    double now = gold_prob(p);
    CHECK(now >= prev - 1e-3);
    prev = now;
  }
  CHECK(prev > before);
}

TEST_CASE("fine-tuning skips examples whose gold does not validate") {
  Fixture f;
  std::vector<Example> data{
      f.train[0], tu::make_example("bad sel", "t", SqlQuery{Agg::None, 9, {}})};
  ModelParams p = tu::seeded_params(tiny_config(), data, f.tables, 3);
  RLConfig cfg;
  cfg.rl_epochs = 1;
  cfg.k = 2;
  cfg.seed = 2;
  RLResult r = rl_finetune(std::move(p), data, {}, f.tables, cfg);
  CHECK(r.skipped == 1);

  ModelParams q = tu::seeded_params(tiny_config(), data, f.tables, 3);
  std::vector<Example> only_bad{data[1]};
  CHECK_THROWS_AS(rl_finetune(std::move(q), only_bad, {}, f.tables, cfg),
                  DataError);
}

TEST_CASE("fine-tuning writes history and is seed-deterministic") {
  Fixture f;
  auto dir = tu::fresh_dir("rl_det");
  std::vector<Example> dev{f.train[1]};
  auto run = [&](const std::string& tag) {
    ModelParams p = tu::seeded_params(tiny_config(), f.train, f.tables, 14);
    RLConfig cfg;
    cfg.k = 3;
    cfg.rl_lr = 0.01;
    cfg.rl_epochs = 2;
    cfg.seed = 77;
    cfg.history_path = (dir / (tag + ".jsonl")).string();
    return rl_finetune(std::move(p), f.train, dev, f.tables, cfg);
  };
  RLResult a = run("a");
  RLResult b = run("b");
  CHECK(same_weights(a.params, b.params));
  CHECK(a.mean_rewards == b.mean_rewards);
  CHECK(a.baseline == b.baseline);
  CHECK(slurp((dir / "a.jsonl").string()) == slurp((dir / "b.jsonl").string()));
  REQUIRE(a.history.size() == 2);
  CHECK(a.history[0].dev_acc_ex >= 0.0);
}
