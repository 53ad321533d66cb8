// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "stamp/numerics.hpp"
#include "stamp/sqlast.hpp"
#include "stamp/table.hpp"

namespace stamp {

// One question paired with its table and gold query. The question is stored
// tokenized; the gold execution result is recomputed where needed.
struct Example {
  std::vector<std::string> question;
  std::string table_id;
  SqlQuery gold;
};

// Token and character-n-gram vocabularies. Index 0 of each list is the
// unknown entry; lookups never fail. Word lists are sorted so construction
// is independent of hash iteration order.
struct Vocab {
  static constexpr const char* kUnk = "<unk>";
  static constexpr const char* kUnkNgram = "<unkng>";

  std::vector<std::string> words;
  std::vector<std::string> ngrams;
  int ngram_min = 3;
  int ngram_max = 4;

  static Vocab build(const std::vector<Example>& examples,
                     const std::map<std::string, Table>& tables,
                     int ngram_min, int ngram_max);
  static Vocab from_lists(std::vector<std::string> words,
                          std::vector<std::string> ngrams, int ngram_min,
                          int ngram_max);

  int word_id(const std::string& token) const;
  std::vector<int> ngram_ids(const std::string& token) const;

  // All contiguous substrings with lengths in [ngram_min, ngram_max]; tokens
  // shorter than ngram_min yield the whole token as their only n-gram.
  static std::vector<std::string> token_ngrams(const std::string& token,
                                               int ngram_min, int ngram_max);

 private:
  std::unordered_map<std::string, int> word_index_;
  std::unordered_map<std::string, int> ngram_index_;
  void rebuild_index();
};

// Word table plus sub-word (character n-gram) table. A token embeds as the
// concatenation of its word vector and the mean of its n-gram vectors.
struct EmbeddingTable {
  Param word;
  Param sub;

  EmbeddingTable() = default;
  EmbeddingTable(int n_words, int n_ngrams, int d_word, int d_sub)
      : word("emb.word", n_words, d_word), sub("emb.ngram", n_ngrams, d_sub) {}

  int dim() const { return word.w.cols + sub.w.cols; }
  Vec embed(const Vocab& v, const std::string& token) const;
  Tape::ExprId embed_expr(Tape& tape, const Vocab& v,
                          const std::string& token);
  void clamp(double range);
  void collect(std::vector<Param*>& out);
};

// Per-column softmax over cell overlap counts: how many distinct words of
// each cell occur in the question.
struct OverlapWeights {
  std::vector<Vec> alpha;  // [col][row], each column sums to 1
};

OverlapWeights overlap_weights(const std::vector<std::string>& question,
                               const Table& t);

struct LoadReport {
  int malformed = 0;
  int missing_table = 0;
  int invalid_gold = 0;
};

// WikiSQL JSON-lines readers and writers. Malformed lines are counted and
// skipped; examples whose table id is absent are dropped and counted; golds
// that fail validate() are kept but counted.
std::map<std::string, Table> load_tables(const std::string& path,
                                         LoadReport* report = nullptr);
std::vector<Example> load_examples(const std::string& path,
                                   const std::map<std::string, Table>& tables,
                                   LoadReport* report = nullptr);
void write_tables(const std::string& path,
                  const std::map<std::string, Table>& tables);
void write_examples(const std::string& path,
                    const std::vector<Example>& examples);

// Optional pretrained word vectors: one token per line, then D floats.
// Returns how many vocabulary words were initialized.
int load_pretrained_embeddings(const std::string& path, const Vocab& v,
                               Param& word_table);

// All distinct orderings of the condition list; fewer than two conditions
// returns the input alone. Execution results are unaffected by construction.
std::vector<Example> shuffle_where(const Example& ex);

struct SynthConfig {
  int n_tables = 50;
  int min_cols = 4;
  int max_cols = 4;
  int min_rows = 4;
  int max_rows = 5;
  int n_train = 2000;
  int n_dev = 200;
  int n_test = 0;
  int max_conds = 3;
  // Chance that an equality condition's column phrase is omitted from the
  // question, leaving only the value words (requires a table-unique value).
  double drop_col_phrase = 0.35;
  // Chance that one word of a condition value is corrupted in the question.
  double value_noise = 0.08;
  // Chance that a column is referred to by its synonym instead of its name.
  double synonym_rate = 0.5;
  // Cap on question template variants per SQL shape; 0 means all built-ins.
  int templates_per_shape = 0;
  // Cap on per-column value pools; 0 means the full built-in pools.
  int value_pool = 0;
};

struct SynthData {
  std::vector<Example> train;
  std::vector<Example> dev;
  std::vector<Example> test;
  std::map<std::string, Table> tables;
};

// Deterministic for a fixed (cfg, seed). Every gold validates, linearizes,
// and executes to a non-empty result. Dev and test examples draw from tables
// never used by training examples.
SynthData synth_dataset(const SynthConfig& cfg, uint64_t seed);

}  // namespace stamp

