// SPDX-License-Identifier: Apache-2.0
#include "stamp/training.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "stamp/common.hpp"
#include "stamp/eval.hpp"

namespace stamp {

namespace {

bool is_bias(const std::string& name) {
  auto ends_with = [&](const char* suffix) {
    size_t n = std::string(suffix).size();
    return name.size() >= n && name.compare(name.size() - n, n, suffix) == 0;
  };
  return name == "b_gate" || ends_with(".bz") || ends_with(".br") ||
         ends_with(".bh");
}

struct TrainItem {
  std::vector<std::string> question;
  const Table* table = nullptr;
  TokenSeq gold;
};

// Gold sequences in the model's value vocabulary: cells in the full model,
// question-word runs when the cell channel is disabled. Unlinearizable
// examples are dropped and counted.
std::vector<TrainItem> prepare_items(const std::vector<Example>& examples,
                                     const std::map<std::string, Table>& tables,
                                     const ModelConfig& cfg,
                                     bool shuffle_where_aug, int* filtered) {
  std::vector<TrainItem> items;
  for (const Example& ex : examples) {
    auto it = tables.find(ex.table_id);
    if (it == tables.end()) throw DataError("unknown table id: " + ex.table_id);
    const Table& t = it->second;
    std::vector<Example> variants;
    if (shuffle_where_aug && ex.gold.conds.size() > 1)
      variants = shuffle_where(ex);
    else
      variants.push_back(ex);
    for (const Example& v : variants) {
      auto gold = cfg.disable_cell_channel
                      ? linearize_question_values(v.gold, t, v.question)
                      : linearize(v.gold, t);
      if (!gold) {
        *filtered += 1;
        continue;
      }
      items.push_back(TrainItem{v.question, &t, std::move(*gold)});
    }
  }
  return items;
}

void write_history_line(std::ofstream& out, const EpochStats& s) {
  if (!out.is_open()) return;
  nlohmann::ordered_json j;
  j["epoch"] = s.epoch;
  j["train_loss"] = s.train_loss;
  if (s.dev_acc_lf < 0)
    j["dev_acc_lf"] = nullptr;
  else
    j["dev_acc_lf"] = s.dev_acc_lf;
  if (s.dev_acc_ex < 0)
    j["dev_acc_ex"] = nullptr;
  else
    j["dev_acc_ex"] = s.dev_acc_ex;
  j["lr"] = s.lr;
  out << j.dump() << "\n";
  out.flush();
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, const Vocab& vocab, Rng& rng) {
  ModelParams p(cfg, vocab);
  for (Param* prm : p.all()) {
    if (is_bias(prm->name)) continue;  // Param construction zero-fills
    double bound = std::sqrt(6.0 / (prm->w.rows + prm->w.cols));
    for (double& x : prm->w.data) x = rng.uniform(-bound, bound);
  }
  return p;
}

TrainResult mle_train(ModelParams params, const std::vector<Example>& train,
                      const std::vector<Example>& dev,
                      const std::map<std::string, Table>& tables,
                      const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw DataError("batch_size must be >= 1");
  if (!(cfg.lr > 0.0)) throw DataError("lr must be > 0");
  if (cfg.epochs < 0) throw DataError("epochs must be >= 0");
  if (cfg.eval_every < 1) throw DataError("eval_every must be >= 1");

  TrainResult result;
  std::vector<TrainItem> items = prepare_items(
      train, tables, params.cfg, cfg.shuffle_where, &result.filtered);
  if (items.empty()) throw DataError("no trainable examples after filtering");

  Rng rng(cfg.seed);
  Tape tape;
  std::vector<Param*> ptrs = params.all();
  std::ofstream history;
  if (!cfg.history_path.empty()) {
    history.open(cfg.history_path, std::ios::trunc);
    if (!history) throw DataError("cannot write " + cfg.history_path);
  }

  ModelParams last_good = params;
  ModelParams best = params;
  const int n_items = static_cast<int>(items.size());

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(items);
    double epoch_loss = 0.0;
    bool diverged = false;
    for (int start = 0; start < n_items && !diverged;
         start += cfg.batch_size) {
      int batch_n = std::min(cfg.batch_size, n_items - start);
      double batch_loss = 0.0;
      for (int i = start; i < start + batch_n; ++i) {
        tape.reset();
        EncodedContext ctx =
            encode(tape, params, items[i].question, *items[i].table);
        SequenceScore score =
            sequence_log_prob(tape, params, ctx, items[i].gold);
        tape.backward(tape.scale(score.total_expr, -1.0));
        batch_loss += -score.total;
      }
      if (!std::isfinite(batch_loss)) {
        diverged = true;
        break;
      }
      try {
        sgd_step(ptrs, cfg.lr / batch_n);
      } catch (const NumericError&) {
        diverged = true;
        break;
      }
      params.clamp_embeddings();
      epoch_loss += batch_loss;
    }
    if (diverged) {
      result.aborted = true;
      params = result.best_epoch >= 0 ? best : last_good;
      break;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / n_items;
    stats.lr = cfg.lr;
    if (!dev.empty() && epoch % cfg.eval_every == 0) {
      EvalReport rep = evaluate(predict_all(tape, params, dev, tables), dev,
                                tables);
      stats.dev_acc_lf = rep.acc_lf;
      stats.dev_acc_ex = rep.acc_ex;
      if (rep.acc_ex > result.best_dev_acc_ex) {
        result.best_dev_acc_ex = rep.acc_ex;
        result.best_epoch = epoch;
        best = params;
      }
    }
    write_history_line(history, stats);
    result.history.push_back(stats);
    last_good = params;
  }

  if (!result.aborted && result.best_epoch >= 0) params = best;
  result.params = std::move(params);
  if (!cfg.checkpoint_path.empty())
    save_checkpoint(cfg.checkpoint_path, result.params.to_checkpoint());
  return result;
}

int reward(const TokenSeq& pred, const SqlQuery& gold, const Table& t,
           const std::vector<std::string>* question) {
  auto parsed = delinearize(pred, t, question);
  if (std::holds_alternative<Malformed>(parsed)) return kRewardInvalid;
  const SqlQuery& q = std::get<SqlQuery>(parsed);
  if (validate(q, t) != InvalidReason::None) return kRewardInvalid;
  ExecutionResult pred_res = execute(q, t);
  if (!pred_res.ok()) return kRewardInvalid;
  return results_equal(pred_res, execute(gold, t)) ? kRewardCorrect
                                                   : kRewardWrongAnswer;
}

RLResult rl_finetune(ModelParams params, const std::vector<Example>& train,
                     const std::vector<Example>& dev,
                     const std::map<std::string, Table>& tables,
                     const RLConfig& cfg) {
  if (cfg.k < 1) throw DataError("k must be >= 1");
  if (!(cfg.rl_lr > 0.0)) throw DataError("rl_lr must be > 0");
  if (cfg.beta < 0.0 || cfg.beta >= 1.0) throw DataError("beta must be in [0,1)");
  if (cfg.eval_every < 1) throw DataError("eval_every must be >= 1");

  RLResult result;
  struct Item {
    const Example* ex;
    const Table* table;
  };
  std::vector<Item> items;
  for (const Example& ex : train) {
    auto it = tables.find(ex.table_id);
    if (it == tables.end()) throw DataError("unknown table id: " + ex.table_id);
    if (validate(ex.gold, it->second) != InvalidReason::None) {
      result.skipped += 1;
      continue;
    }
    items.push_back(Item{&ex, &it->second});
  }
  if (items.empty()) throw DataError("no usable examples for fine-tuning");

  Rng rng(cfg.seed);
  Tape tape;
  std::vector<Param*> ptrs = params.all();
  std::ofstream history;
  if (!cfg.history_path.empty()) {
    history.open(cfg.history_path, std::ios::trunc);
    if (!history) throw DataError("cannot write " + cfg.history_path);
  }

  double b = 0.0;
  ModelParams last_good = params;
  for (int epoch = 1; epoch <= cfg.rl_epochs; ++epoch) {
    rng.shuffle(items);
    double epoch_loss = 0.0;
    double epoch_reward = 0.0;
    long n_samples = 0;
    bool diverged = false;
    for (const Item& item : items) {
      tape.reset();
      EncodedContext ctx =
          encode(tape, params, item.ex->question, *item.table);
      std::vector<SampleResult> samples =
          sample(tape, params, ctx, rng, cfg.k);
      std::vector<Tape::ExprId> terms;
      terms.reserve(samples.size());
      double sum_r = 0.0;
      for (const SampleResult& s : samples) {
        int r = reward(s.seq, item.ex->gold, *item.table,
                       &item.ex->question);
        sum_r += r;
        terms.push_back(tape.scale(s.log_prob_expr, -(r - b)));
      }
      Tape::ExprId loss = tape.sum_list(terms);
      double loss_value = tape.scalar(loss);
      if (!std::isfinite(loss_value)) {
        diverged = true;
        break;
      }
      tape.backward(loss);
      try {
        sgd_step(ptrs, cfg.rl_lr);
      } catch (const NumericError&) {
        diverged = true;
        break;
      }
      params.clamp_embeddings();
      double mean_r = sum_r / samples.size();
      b = cfg.beta * b + (1.0 - cfg.beta) * mean_r;
      epoch_loss += loss_value;
      epoch_reward += sum_r;
      n_samples += static_cast<long>(samples.size());
    }
    if (diverged) {
      result.aborted = true;
      params = last_good;
      break;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(items.size());
    stats.lr = cfg.rl_lr;
    if (!dev.empty() && epoch % cfg.eval_every == 0) {
      EvalReport rep = evaluate(predict_all(tape, params, dev, tables), dev,
                                tables);
      stats.dev_acc_lf = rep.acc_lf;
      stats.dev_acc_ex = rep.acc_ex;
    }
    write_history_line(history, stats);
    result.history.push_back(stats);
    result.mean_rewards.push_back(epoch_reward /
                                  static_cast<double>(n_samples));
    last_good = params;
  }

  result.baseline = b;
  result.params = std::move(params);
  if (!cfg.checkpoint_path.empty())
    save_checkpoint(cfg.checkpoint_path, result.params.to_checkpoint());
  return result;
}

}  // namespace stamp
