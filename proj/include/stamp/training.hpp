// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "stamp/data.hpp"
#include "stamp/model.hpp"
#include "stamp/sqlast.hpp"

namespace stamp {

// Optimization settings; model dimensions and channel flags ride in
// ModelConfig. lr 0.05 is the desk-scale default; the published setting 0.5
// assumes large pretrained embeddings.
struct TrainConfig {
  int batch_size = 64;
  double lr = 0.05;
  int epochs = 30;
  uint64_t seed = 1;
  int eval_every = 1;          // dev-eval cadence in epochs
  bool shuffle_where = false;  // augment with WHERE-order permutations
  std::string history_path;    // optional JSONL, one object per epoch
  std::string checkpoint_path;  // optional best-dev checkpoint
};

struct RLConfig {
  int k = 5;  // samples per instance
  double rl_lr = 0.005;
  int rl_epochs = 3;
  double beta = 0.9;  // baseline decay
  uint64_t seed = 1;
  int eval_every = 1;
  std::string history_path;
  std::string checkpoint_path;
};

// Per-epoch record; dev fields are -1 when no evaluation ran that epoch.
struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_acc_lf = -1.0;
  double dev_acc_ex = -1.0;
  double lr = 0.0;
};

// Every weight matrix uniform on +/- sqrt(6 / (fan_in + fan_out)); bias rows
// zero. Deterministic in rng state and the fixed parameter registry order.
ModelParams init_params(const ModelConfig& cfg, const Vocab& vocab, Rng& rng);

struct TrainResult {
  ModelParams params;  // best-dev when a dev set was given, else final
  std::vector<EpochStats> history;
  int filtered = 0;  // examples dropped because the gold does not linearize
  bool aborted = false;  // divergence; params hold the last good state
  int best_epoch = -1;
  double best_dev_acc_ex = -1.0;
};

// Minibatch SGD on the negative sequence log-probability (gate term plus
// token term, summed over steps, averaged over the batch). Embeddings are
// clamped after every optimizer step. Deterministic given (seed, cfg, data).
TrainResult mle_train(ModelParams params, const std::vector<Example>& train,
                      const std::vector<Example>& dev,
                      const std::map<std::string, Table>& tables,
                      const TrainConfig& cfg);

inline constexpr int kRewardCorrect = 1;
inline constexpr int kRewardWrongAnswer = -1;
inline constexpr int kRewardInvalid = -2;

// +1 when the prediction executes to the gold's result, -1 when it is a
// valid query with a different result, -2 when it does not parse or does not
// validate. `question` resolves question-word value tokens.
int reward(const TokenSeq& pred, const SqlQuery& gold, const Table& t,
           const std::vector<std::string>* question = nullptr);

struct RLResult {
  ModelParams params;
  std::vector<EpochStats> history;   // train_loss = mean surrogate loss
  std::vector<double> mean_rewards;  // one entry per epoch
  int skipped = 0;    // examples whose gold does not validate
  bool aborted = false;
  double baseline = 0.0;  // final moving-average baseline
};

// REINFORCE with a moving-average baseline: per instance, draw cfg.k
// sequences, weight each log-probability by (reward - baseline) computed
// against the pre-update baseline, take one SGD step, then fold the mean
// sampled reward into the baseline.
RLResult rl_finetune(ModelParams params, const std::vector<Example>& train,
                     const std::vector<Example>& dev,
                     const std::map<std::string, Table>& tables,
                     const RLConfig& cfg);

}  // namespace stamp
