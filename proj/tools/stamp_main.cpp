// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stamp/checkpoint.hpp"
#include "stamp/common.hpp"
#include "stamp/data.hpp"
#include "stamp/eval.hpp"
#include "stamp/model.hpp"
#include "stamp/sqlast.hpp"
#include "stamp/table.hpp"
#include "stamp/text.hpp"
#include "stamp/training.hpp"

namespace {

using namespace stamp;

void warn_report(const LoadReport& rep) {
  if (rep.malformed > 0)
    std::fprintf(stderr, "warning: %d malformed lines skipped\n",
                 rep.malformed);
  if (rep.missing_table > 0)
    std::fprintf(stderr, "warning: %d examples dropped (unknown table)\n",
                 rep.missing_table);
  if (rep.invalid_gold > 0)
    std::fprintf(stderr, "warning: %d examples kept with invalid gold\n",
                 rep.invalid_gold);
}

void write_text_file(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp);
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

struct SynthArgs {
  std::string out;
  uint64_t seed = 1;
  SynthConfig cfg;
};

void run_synth(const SynthArgs& a) {
  SynthData d = synth_dataset(a.cfg, a.seed);
  std::filesystem::create_directories(a.out);
  write_tables(a.out + "/tables.jsonl", d.tables);
  write_examples(a.out + "/train.jsonl", d.train);
  if (a.cfg.n_dev > 0) write_examples(a.out + "/dev.jsonl", d.dev);
  if (a.cfg.n_test > 0) write_examples(a.out + "/test.jsonl", d.test);
  std::printf("wrote %zu tables, %zu train, %zu dev, %zu test to %s\n",
              d.tables.size(), d.train.size(), d.dev.size(), d.test.size(),
              a.out.c_str());
}

struct TrainArgs {
  std::string tables_path;
  std::string train_path;
  std::string dev_path;
  std::string out = "model.ckpt";
  std::string pretrained;
  uint64_t seed = 1;
  ModelConfig mc;
  TrainConfig tc;
};

int run_train(TrainArgs& a) {
  LoadReport rep;
  auto tables = load_tables(a.tables_path, &rep);
  auto train = load_examples(a.train_path, tables, &rep);
  std::vector<Example> dev;
  if (!a.dev_path.empty()) dev = load_examples(a.dev_path, tables, &rep);
  warn_report(rep);

  Vocab vocab = Vocab::build(train, tables, a.mc.ngram_min, a.mc.ngram_max);
  Rng rng(a.seed);
  ModelParams params = init_params(a.mc, vocab, rng);
  if (!a.pretrained.empty()) {
    int n = load_pretrained_embeddings(a.pretrained, vocab, params.emb.word);
    std::fprintf(stderr, "loaded pretrained vectors for %d words\n", n);
  }
  a.tc.seed = a.seed;
  a.tc.checkpoint_path = a.out;
  TrainResult result = mle_train(std::move(params), train, dev, tables, a.tc);
  if (result.filtered > 0)
    std::fprintf(stderr, "warning: %d unlinearizable examples filtered\n",
                 result.filtered);
  if (!result.history.empty())
    std::printf("final train loss %.6f\n", result.history.back().train_loss);
  if (result.best_epoch >= 0)
    std::printf("best dev acc_ex %.4f at epoch %d\n", result.best_dev_acc_ex,
                result.best_epoch);
  std::printf("checkpoint written to %s\n", a.out.c_str());
  if (result.aborted) {
    std::fprintf(stderr,
                 "error: training diverged; kept last good parameters\n");
    return 3;
  }
  return 0;
}

struct RlArgs {
  std::string checkpoint;
  std::string tables_path;
  std::string train_path;
  std::string dev_path;
  std::string out = "model_rl.ckpt";
  uint64_t seed = 1;
  RLConfig rc;
};

int run_rl(RlArgs& a) {
  ModelParams params = ModelParams::from_checkpoint(load_checkpoint(a.checkpoint));
  LoadReport rep;
  auto tables = load_tables(a.tables_path, &rep);
  auto train = load_examples(a.train_path, tables, &rep);
  std::vector<Example> dev;
  if (!a.dev_path.empty()) dev = load_examples(a.dev_path, tables, &rep);
  warn_report(rep);

  a.rc.seed = a.seed;
  a.rc.checkpoint_path = a.out;
  RLResult result = rl_finetune(std::move(params), train, dev, tables, a.rc);
  if (result.skipped > 0)
    std::fprintf(stderr, "warning: %d examples with invalid gold skipped\n",
                 result.skipped);
  for (size_t i = 0; i < result.mean_rewards.size(); ++i)
    std::printf("epoch %zu mean reward %.4f\n", i + 1,
                result.mean_rewards[i]);
  std::printf("checkpoint written to %s\n", a.out.c_str());
  if (result.aborted) {
    std::fprintf(stderr,
                 "error: fine-tuning diverged; kept last good parameters\n");
    return 3;
  }
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::string tables_path;
  std::string examples_path;
  std::string out;    // report prefix; stdout when empty
  std::string preds;  // optional per-example JSONL
};

void run_eval(const EvalArgs& a) {
  ModelParams params = ModelParams::from_checkpoint(load_checkpoint(a.checkpoint));
  LoadReport rep;
  auto tables = load_tables(a.tables_path, &rep);
  auto examples = load_examples(a.examples_path, tables, &rep);
  warn_report(rep);

  Tape tape;
  std::vector<TokenSeq> preds;
  std::vector<char> truncated;
  preds.reserve(examples.size());
  for (const Example& ex : examples) {
    DecodeResult d =
        decode_greedy(tape, params, ex.question, tables.at(ex.table_id));
    preds.push_back(std::move(d.seq));
    truncated.push_back(d.truncated ? 1 : 0);
  }
  EvalReport report = evaluate(preds, examples, tables);
  ErrorBreakdown bd = error_breakdown(preds, examples, tables);

  nlohmann::ordered_json j = nlohmann::ordered_json::parse(report_to_json(report));
  nlohmann::ordered_json jb;
  jb["wrong"] = bd.wrong;
  jb["wrong_sel"] = bd.wrong_sel;
  jb["wrong_cond_count"] = bd.wrong_cond_count;
  jb["wrong_where_cols"] = bd.wrong_where_cols;
  j["error_breakdown"] = jb;

  if (a.out.empty()) {
    std::fputs(report_to_text(report).c_str(), stdout);
  } else {
    write_text_file(a.out + ".json", j.dump(2) + "\n");
    write_text_file(a.out + ".txt", report_to_text(report));
    std::printf("report written to %s.json and %s.txt\n", a.out.c_str(),
                a.out.c_str());
  }

  if (!a.preds.empty()) {
    std::string body;
    for (size_t i = 0; i < preds.size(); ++i) {
      const Table& t = tables.at(examples[i].table_id);
      nlohmann::ordered_json line;
      line["example_index"] = i;
      nlohmann::ordered_json toks = nlohmann::ordered_json::array();
      for (const DecoderToken& tok : preds[i])
        toks.push_back(token_to_string(tok, t));
      line["tokens"] = std::move(toks);
      auto parsed = delinearize(preds[i], t, &examples[i].question);
      if (std::holds_alternative<SqlQuery>(parsed) &&
          validate(std::get<SqlQuery>(parsed), t) == InvalidReason::None) {
        line["sql"] = serialize(std::get<SqlQuery>(parsed), t);
        line["valid"] = true;
      } else {
        line["sql"] = nullptr;
        line["valid"] = false;
      }
      line["truncated"] = truncated[i] != 0;
      body += line.dump() + "\n";
    }
    write_text_file(a.preds, body);
  }
}

struct PredictArgs {
  std::string checkpoint;
  std::string tables_path;
  std::string table_id;
  std::string question;
  bool verbose = false;
};

void run_predict(const PredictArgs& a) {
  ModelParams params = ModelParams::from_checkpoint(load_checkpoint(a.checkpoint));
  auto tables = load_tables(a.tables_path);
  auto it = tables.find(a.table_id);
  if (it == tables.end()) throw DataError("unknown table id: " + a.table_id);
  const Table& t = it->second;
  std::vector<std::string> tokens = tokenize(a.question);
  if (tokens.empty()) throw DataError("empty question");

  Tape tape;
  DecodeResult d = decode_greedy(tape, params, tokens, t);
  if (a.verbose)
    for (const DecoderToken& tok : d.seq)
      std::printf("# %s\n", token_to_string(tok, t).c_str());
  auto parsed = delinearize(d.seq, t, &tokens);
  if (std::holds_alternative<SqlQuery>(parsed)) {
    std::printf("%s\n", serialize(std::get<SqlQuery>(parsed), t).c_str());
  } else {
    const Malformed& m = std::get<Malformed>(parsed);
    std::printf("malformed at position %d: %s\n", m.pos, m.reason.c_str());
  }
  if (d.truncated) std::fprintf(stderr, "warning: decode hit max length\n");
}

struct ExecArgs {
  std::string tables_path;
  std::string table_id;
  std::string query;
};

SqlQuery parse_query_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad query JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("sel") || !j["sel"].is_number_integer() ||
      !j.contains("agg") || !j["agg"].is_number_integer() ||
      !j.contains("conds") || !j["conds"].is_array())
    throw DataError("query must be {\"sel\": int, \"agg\": int, \"conds\": [[col, op, value], ...]}");
  int agg = j["agg"].get<int>();
  if (agg < 0 || agg > 5) throw DataError("agg index out of range");
  SqlQuery q;
  q.sel = j["sel"].get<int>();
  q.agg = static_cast<Agg>(agg);
  for (const auto& c : j["conds"]) {
    if (!c.is_array() || c.size() != 3 || !c[0].is_number_integer() ||
        !c[1].is_number_integer())
      throw DataError("each condition must be [col, op, value]");
    int op = c[1].get<int>();
    if (op < 0 || op > 2) throw DataError("op index out of range");
    Cond cond;
    cond.col = c[0].get<int>();
    cond.op = static_cast<CondOp>(op);
    if (c[2].is_string())
      cond.value = c[2].get<std::string>();
    else if (c[2].is_number())
      cond.value = format_value(c[2].get<double>());
    else
      throw DataError("condition value must be a string or number");
    q.conds.push_back(std::move(cond));
  }
  return q;
}

void run_exec(const ExecArgs& a) {
  auto tables = load_tables(a.tables_path);
  auto it = tables.find(a.table_id);
  if (it == tables.end()) throw DataError("unknown table id: " + a.table_id);
  SqlQuery q = parse_query_json(a.query);
  ExecutionResult r = execute(q, it->second);
  if (!r.ok())
    throw NumericError(r.error == ExecError::InvalidQuery
                           ? "query does not validate against the table"
                           : "aggregate over non-numeric values");
  if (r.is_list) {
    for (const std::string& v : r.values) std::printf("%s\n", v.c_str());
  } else if (r.number) {
    std::printf("%s\n", format_value(*r.number).c_str());
  } else if (r.text) {
    std::printf("%s\n", r.text->c_str());
  } else {
    std::printf("null\n");
  }
}

// CLI11 reads config files only while processing the root command, so a
// subcommand's --config is expanded into ordinary --key=value tokens before
// parsing. Keys given explicitly on the command line win over file values;
// keys that match no option are rejected.
std::vector<std::string> expand_config_args(const CLI::App& app,
                                            std::vector<std::string> args) {
  size_t sub_pos = args.size();
  const CLI::App* sub = nullptr;
  for (size_t i = 0; i < args.size(); ++i) {
    if (!args[i].empty() && args[i][0] != '-') {
      sub = app.get_subcommand_no_throw(args[i]);
      sub_pos = i;
      break;
    }
  }
  if (sub == nullptr) return args;

  std::vector<std::string> files;
  std::set<std::string> given;
  for (size_t i = sub_pos + 1; i < args.size(); ++i) {
    const std::string& tok = args[i];
    if (tok == "--config") {
      if (i + 1 < args.size()) files.push_back(args[++i]);
    } else if (tok.rfind("--config=", 0) == 0) {
      files.push_back(tok.substr(9));
    } else if (tok.rfind("--", 0) == 0 && tok.size() > 2) {
      given.insert(tok.substr(2, tok.find('=') - 2));
    }
  }
  if (files.empty()) return args;

  std::vector<std::string> injected;
  for (const std::string& file : files) {
    for (const CLI::ConfigItem& item :
         sub->get_config_formatter()->from_file(file)) {
      if (item.name == "++" || item.name == "--") continue;
      if (!item.parents.empty())
        throw CLI::ConfigError::Extras(item.fullname());
      const CLI::Option* op = sub->get_option_no_throw("--" + item.name);
      if (op == nullptr) throw CLI::ConfigError::Extras(item.fullname());
      if (!op->get_configurable())
        throw CLI::ConfigError::NotConfigurable(item.fullname());
      if (given.count(item.name)) continue;
      if (item.inputs.size() > 1)
        throw CLI::ConfigError::Extras(item.fullname() +
                                       " (single value expected)");
      injected.push_back(item.inputs.empty()
                             ? "--" + item.name
                             : "--" + item.name + "=" + item.inputs[0]);
      given.insert(item.name);
    }
  }
  args.insert(args.begin() + static_cast<long>(sub_pos) + 1, injected.begin(),
              injected.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"STAMP: table-aware text-to-SQL parser"};
  app.require_subcommand(1);

  SynthArgs sa;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->set_config("--config");
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--seed", sa.seed, "Random seed");
  synth->add_option("--tables", sa.cfg.n_tables, "Number of tables");
  synth->add_option("--train", sa.cfg.n_train, "Training examples");
  synth->add_option("--dev", sa.cfg.n_dev, "Dev examples");
  synth->add_option("--test", sa.cfg.n_test, "Test examples");
  synth->add_option("--min-cols", sa.cfg.min_cols, "Minimum columns");
  synth->add_option("--max-cols", sa.cfg.max_cols, "Maximum columns");
  synth->add_option("--min-rows", sa.cfg.min_rows, "Minimum rows");
  synth->add_option("--max-rows", sa.cfg.max_rows, "Maximum rows");
  synth->add_option("--max-conds", sa.cfg.max_conds, "Maximum conditions");
  synth->add_option("--drop-col-phrase", sa.cfg.drop_col_phrase,
                    "Chance to omit an EQ condition's column phrase");
  synth->add_option("--value-noise", sa.cfg.value_noise,
                    "Chance to corrupt one value word in the question");
  synth->add_option("--synonym-rate", sa.cfg.synonym_rate,
                    "Chance to use a column synonym");

  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "MLE training");
  train->set_config("--config");
  train->add_option("--tables", ta.tables_path, "Tables JSONL")->required();
  train->add_option("--train", ta.train_path, "Training examples JSONL")
      ->required();
  train->add_option("--dev", ta.dev_path, "Dev examples JSONL");
  train->add_option("--out", ta.out, "Checkpoint output path");
  train->add_option("--history", ta.tc.history_path, "History JSONL path");
  train->add_option("--pretrained", ta.pretrained,
                    "Pretrained word vectors (text format)");
  train->add_option("--seed", ta.seed, "Random seed");
  train->add_option("--epochs", ta.tc.epochs, "Training epochs");
  train->add_option("--batch", ta.tc.batch_size, "Minibatch size");
  train->add_option("--lr", ta.tc.lr, "SGD learning rate");
  train->add_option("--eval-every", ta.tc.eval_every,
                    "Dev evaluation cadence (epochs)");
  train->add_flag("--shuffle-where", ta.tc.shuffle_where,
                  "Augment with WHERE-order permutations");
  train->add_option("--hidden", ta.mc.h, "Encoder hidden size per direction");
  train->add_option("--d-word", ta.mc.d_word, "Word embedding size");
  train->add_option("--d-sub", ta.mc.d_sub, "Sub-word embedding size");
  train->add_option("--lambda", ta.mc.lambda, "Cell channel mixture weight");
  train->add_option("--max-len", ta.mc.max_len, "Decoder length limit");
  train->add_option("--emb-clamp", ta.mc.emb_clamp, "Embedding clamp range");
  train->add_flag("--grammar-mask", ta.mc.grammar_mask,
                  "Constrain decoding to grammatical sequences");
  train->add_flag("--disable-cell-channel", ta.mc.disable_cell_channel,
                  "Ablation: copy values from the question instead of cells");
  train->add_flag("--disable-column-cell", ta.mc.disable_column_cell,
                  "Ablation: no cell enhancement of column vectors");

  RlArgs ra;
  CLI::App* rl = app.add_subcommand("rl", "Policy-gradient fine-tuning");
  rl->set_config("--config");
  rl->add_option("--checkpoint", ra.checkpoint, "MLE checkpoint")->required();
  rl->add_option("--tables", ra.tables_path, "Tables JSONL")->required();
  rl->add_option("--train", ra.train_path, "Training examples JSONL")
      ->required();
  rl->add_option("--dev", ra.dev_path, "Dev examples JSONL");
  rl->add_option("--out", ra.out, "Checkpoint output path");
  rl->add_option("--history", ra.rc.history_path, "History JSONL path");
  rl->add_option("--seed", ra.seed, "Random seed");
  rl->add_option("--k", ra.rc.k, "Samples per instance");
  rl->add_option("--lr", ra.rc.rl_lr, "Fine-tuning learning rate");
  rl->add_option("--epochs", ra.rc.rl_epochs, "Fine-tuning epochs");
  rl->add_option("--beta", ra.rc.beta, "Baseline decay");
  rl->add_option("--eval-every", ra.rc.eval_every,
                 "Dev evaluation cadence (epochs)");

  EvalArgs ea;
  CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->set_config("--config");
  ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint")->required();
  ev->add_option("--tables", ea.tables_path, "Tables JSONL")->required();
  ev->add_option("--examples", ea.examples_path, "Examples JSONL")->required();
  ev->add_option("--out", ea.out, "Report path prefix (.json/.txt)");
  ev->add_option("--preds", ea.preds, "Per-example predictions JSONL");

  PredictArgs pa;
  CLI::App* pred = app.add_subcommand("predict", "Parse one question");
  pred->set_config("--config");
  pred->add_option("--checkpoint", pa.checkpoint, "Checkpoint")->required();
  pred->add_option("--tables", pa.tables_path, "Tables JSONL")->required();
  pred->add_option("--table-id", pa.table_id, "Table id")->required();
  pred->add_option("--question", pa.question, "Question text")->required();
  pred->add_flag("--verbose", pa.verbose, "Print the decoded token trace");

  ExecArgs xa;
  CLI::App* ex = app.add_subcommand("exec", "Execute a query against a table");
  ex->set_config("--config");
  ex->add_option("--tables", xa.tables_path, "Tables JSONL")->required();
  ex->add_option("--table-id", xa.table_id, "Table id")->required();
  ex->add_option("--query", xa.query, "Query as JSON")->required();

  if (argc > 0) app.name(argv[0]);
  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config_args(app, std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) {
      run_synth(sa);
      return 0;
    }
    if (train->parsed()) return run_train(ta);
    if (rl->parsed()) return run_rl(ra);
    if (ev->parsed()) {
      run_eval(ea);
      return 0;
    }
    if (pred->parsed()) {
      run_predict(pa);
      return 0;
    }
    if (ex->parsed()) {
      run_exec(xa);
      return 0;
    }
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 1;
}
