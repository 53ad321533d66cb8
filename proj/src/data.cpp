// SPDX-License-Identifier: Apache-2.0
#include "stamp/data.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "stamp/common.hpp"
#include "stamp/text.hpp"

namespace stamp {

Vocab Vocab::build(const std::vector<Example>& examples,
                   const std::map<std::string, Table>& tables, int ngram_min,
                   int ngram_max) {
  if (ngram_min < 1 || ngram_max < ngram_min)
    throw DataError("bad n-gram range");
  std::set<std::string> referenced;
  std::set<std::string> toks;
  for (const Example& ex : examples) {
    referenced.insert(ex.table_id);
    toks.insert(ex.question.begin(), ex.question.end());
  }
  for (const auto& [id, t] : tables) {
    if (!referenced.count(id)) continue;
    for (const auto& h : t.header_tokens) toks.insert(h.begin(), h.end());
    for (const auto& row : t.rows)
      for (const Cell& c : row) toks.insert(c.tokens.begin(), c.tokens.end());
  }
  std::set<std::string> grams;
  for (const std::string& t : toks)
    for (const std::string& g : token_ngrams(t, ngram_min, ngram_max))
      grams.insert(g);

  Vocab v;
  v.ngram_min = ngram_min;
  v.ngram_max = ngram_max;
  v.words.push_back(kUnk);
  v.words.insert(v.words.end(), toks.begin(), toks.end());
  v.ngrams.push_back(kUnkNgram);
  v.ngrams.insert(v.ngrams.end(), grams.begin(), grams.end());
  v.rebuild_index();
  return v;
}

Vocab Vocab::from_lists(std::vector<std::string> words,
                        std::vector<std::string> ngrams, int ngram_min,
                        int ngram_max) {
  if (ngram_min < 1 || ngram_max < ngram_min)
    throw DataError("bad n-gram range");
  if (words.empty() || words[0] != kUnk || ngrams.empty() ||
      ngrams[0] != kUnkNgram)
    throw DataError("vocabulary lists must start with the unknown entries");
  Vocab v;
  v.ngram_min = ngram_min;
  v.ngram_max = ngram_max;
  v.words = std::move(words);
  v.ngrams = std::move(ngrams);
  v.rebuild_index();
  return v;
}

void Vocab::rebuild_index() {
  word_index_.clear();
  ngram_index_.clear();
  for (size_t i = 0; i < words.size(); ++i)
    word_index_.emplace(words[i], static_cast<int>(i));
  for (size_t i = 0; i < ngrams.size(); ++i)
    ngram_index_.emplace(ngrams[i], static_cast<int>(i));
}

int Vocab::word_id(const std::string& token) const {
  auto it = word_index_.find(token);
  return it == word_index_.end() ? 0 : it->second;
}

std::vector<int> Vocab::ngram_ids(const std::string& token) const {
  std::vector<int> ids;
  for (const std::string& g : token_ngrams(token, ngram_min, ngram_max)) {
    auto it = ngram_index_.find(g);
    ids.push_back(it == ngram_index_.end() ? 0 : it->second);
  }
  return ids;
}

std::vector<std::string> Vocab::token_ngrams(const std::string& token,
                                             int ngram_min, int ngram_max) {
  int len = static_cast<int>(token.size());
  if (len < ngram_min) return {token};
  std::vector<std::string> out;
  for (int n = ngram_min; n <= ngram_max; ++n)
    for (int i = 0; i + n <= len; ++i) out.push_back(token.substr(i, n));
  return out;
}

Vec EmbeddingTable::embed(const Vocab& v, const std::string& token) const {
  Vec out;
  out.reserve(dim());
  int wid = v.word_id(token);
  const double* wrow =
      word.w.data.data() + static_cast<size_t>(wid) * word.w.cols;
  out.insert(out.end(), wrow, wrow + word.w.cols);
  std::vector<int> gids = v.ngram_ids(token);
  Vec mean(sub.w.cols, 0.0);
  for (int g : gids) {
    const double* grow = sub.w.data.data() + static_cast<size_t>(g) * sub.w.cols;
    for (int c = 0; c < sub.w.cols; ++c) mean[c] += grow[c];
  }
  // Multiplying by the reciprocal keeps this bitwise equal to embed_expr,
  // whose mean node scales the same way.
  const double inv = 1.0 / static_cast<double>(gids.size());
  for (double& x : mean) x *= inv;
  out.insert(out.end(), mean.begin(), mean.end());
  return out;
}

Tape::ExprId EmbeddingTable::embed_expr(Tape& tape, const Vocab& v,
                                        const std::string& token) {
  return tape.concat({tape.param_row(word, v.word_id(token)),
                      tape.param_mean_rows(sub, v.ngram_ids(token))});
}

void EmbeddingTable::clamp(double range) {
  clamp_param(word, range);
  clamp_param(sub, range);
}

void EmbeddingTable::collect(std::vector<Param*>& out) {
  out.push_back(&word);
  out.push_back(&sub);
}

OverlapWeights overlap_weights(const std::vector<std::string>& question,
                               const Table& t) {
  std::set<std::string> qset(question.begin(), question.end());
  OverlapWeights w;
  w.alpha.resize(t.n_cols());
  for (int col = 0; col < t.n_cols(); ++col) {
    if (t.n_rows() == 0) continue;
    Vec counts(t.n_rows(), 0.0);
    for (int row = 0; row < t.n_rows(); ++row) {
      std::set<std::string> cell_words(t.rows[row][col].tokens.begin(),
                                       t.rows[row][col].tokens.end());
      int c = 0;
      for (const std::string& word : cell_words)
        if (qset.count(word)) ++c;
      counts[row] = static_cast<double>(c);
    }
    w.alpha[col] = softmax(counts);
  }
  return w;
}

namespace {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

// WikiSQL cell and condition values may be strings or numbers; numbers are
// canonicalized through format_value so "3" and 3 load identically.
bool json_value_string(const Json& j, std::string* out) {
  if (j.is_string()) {
    *out = j.get<std::string>();
    return true;
  }
  if (j.is_number()) {
    *out = format_value(j.get<double>());
    return true;
  }
  return false;
}

}  // namespace

std::map<std::string, Table> load_tables(const std::string& path,
                                         LoadReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open table file " + path);
  std::map<std::string, Table> tables;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    bool ok = j.is_object() && j.contains("id") && j["id"].is_string() &&
              j.contains("header") && j["header"].is_array() &&
              j.contains("rows") && j["rows"].is_array();
    if (ok) {
      std::string id = j["id"].get<std::string>();
      std::vector<std::string> header;
      for (const Json& h : j["header"]) {
        std::string s;
        if (!json_value_string(h, &s)) {
          ok = false;
          break;
        }
        header.push_back(s);
      }
      std::vector<std::vector<std::string>> rows;
      if (ok) {
        for (const Json& r : j["rows"]) {
          if (!r.is_array()) {
            ok = false;
            break;
          }
          std::vector<std::string> row;
          for (const Json& c : r) {
            std::string s;
            if (!json_value_string(c, &s)) {
              ok = false;
              break;
            }
            row.push_back(s);
          }
          if (!ok) break;
          rows.push_back(std::move(row));
        }
      }
      if (ok) {
        try {
          tables[id] = make_table(id, header, rows);
        } catch (const DataError&) {
          ok = false;
        }
      }
    }
    if (!ok && report) report->malformed++;
  }
  return tables;
}

std::vector<Example> load_examples(const std::string& path,
                                   const std::map<std::string, Table>& tables,
                                   LoadReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open example file " + path);
  std::vector<Example> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Json j = Json::parse(line, nullptr, false);
    bool ok = j.is_object() && j.contains("question") &&
              j["question"].is_string() && j.contains("table_id") &&
              j["table_id"].is_string() && j.contains("sql") &&
              j["sql"].is_object();
    Example ex;
    if (ok) {
      const Json& sql = j["sql"];
      ok = sql.contains("sel") && sql["sel"].is_number_integer() &&
           sql.contains("agg") && sql["agg"].is_number_integer() &&
           sql.contains("conds") && sql["conds"].is_array();
      if (ok) {
        int sel = sql["sel"].get<int>();
        int agg = sql["agg"].get<int>();
        ok = sel >= 0 && agg >= 0 && agg <= 5;
        ex.gold.sel = sel;
        ex.gold.agg = static_cast<Agg>(agg);
        if (ok) {
          for (const Json& c : sql["conds"]) {
            if (!c.is_array() || c.size() != 3 ||
                !c[0].is_number_integer() || !c[1].is_number_integer()) {
              ok = false;
              break;
            }
            Cond cond;
            cond.col = c[0].get<int>();
            int op = c[1].get<int>();
            if (cond.col < 0 || op < 0 || op > 2 ||
                !json_value_string(c[2], &cond.value)) {
              ok = false;
              break;
            }
            cond.op = static_cast<CondOp>(op);
            ex.gold.conds.push_back(cond);
          }
        }
      }
    }
    if (!ok) {
      if (report) report->malformed++;
      continue;
    }
    ex.question = tokenize(j["question"].get<std::string>());
    ex.table_id = j["table_id"].get<std::string>();
    auto it = tables.find(ex.table_id);
    if (it == tables.end()) {
      if (report) report->missing_table++;
      continue;
    }
    const Table& t = it->second;
    // Structurally broken column indices are unusable; value mismatches are
    // dataset noise and stay in (counted) so evaluation sees every example.
    InvalidReason r = validate(ex.gold, t);
    if (r == InvalidReason::ColumnOutOfRange) {
      if (report) report->malformed++;
      continue;
    }
    if (r != InvalidReason::None && report) report->invalid_gold++;
    out.push_back(std::move(ex));
  }
  return out;
}

void write_tables(const std::string& path,
                  const std::map<std::string, Table>& tables) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  for (const auto& [id, t] : tables) {
    OrderedJson j;
    j["id"] = id;
    j["header"] = t.header_raw;
    auto rows = OrderedJson::array();
    for (const auto& row : t.rows) {
      auto r = OrderedJson::array();
      for (const Cell& c : row) r.push_back(c.raw);
      rows.push_back(std::move(r));
    }
    j["rows"] = std::move(rows);
    out << j.dump() << "\n";
  }
  if (!out) throw DataError("write failed for " + path);
}

void write_examples(const std::string& path,
                    const std::vector<Example>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  for (const Example& ex : examples) {
    OrderedJson j;
    j["question"] = join_tokens(ex.question);
    j["table_id"] = ex.table_id;
    OrderedJson sql;
    sql["sel"] = ex.gold.sel;
    sql["agg"] = static_cast<int>(ex.gold.agg);
    auto conds = OrderedJson::array();
    for (const Cond& c : ex.gold.conds)
      conds.push_back(OrderedJson::array(
          {c.col, static_cast<int>(c.op), c.value}));
    sql["conds"] = std::move(conds);
    j["sql"] = std::move(sql);
    out << j.dump() << "\n";
  }
  if (!out) throw DataError("write failed for " + path);
}

int load_pretrained_embeddings(const std::string& path, const Vocab& v,
                               Param& word_table) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding file " + path);
  int loaded = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    int wid = v.word_id(token);
    if (wid == 0 && token != Vocab::kUnk) {
      // Not in vocabulary; skip the vector.
      continue;
    }
    Vec row;
    std::string val;
    while (ls >> val) {
      auto x = parse_number(val);
      if (!x) throw DataError("bad embedding value '" + val + "' in " + path);
      row.push_back(*x);
    }
    if (static_cast<int>(row.size()) != word_table.w.cols)
      throw DataError("embedding dimension " + std::to_string(row.size()) +
                      " does not match table width " +
                      std::to_string(word_table.w.cols));
    for (int c = 0; c < word_table.w.cols; ++c)
      word_table.w.at(wid, c) = row[c];
    ++loaded;
  }
  return loaded;
}

std::vector<Example> shuffle_where(const Example& ex) {
  if (ex.gold.conds.size() < 2) return {ex};
  auto less = [](const Cond& a, const Cond& b) {
    if (a.col != b.col) return a.col < b.col;
    if (a.op != b.op) return static_cast<int>(a.op) < static_cast<int>(b.op);
    return a.value < b.value;
  };
  std::vector<Cond> perm = ex.gold.conds;
  std::sort(perm.begin(), perm.end(), less);
  std::vector<Example> out;
  do {
    Example e = ex;
    e.gold.conds = perm;
    out.push_back(std::move(e));
  } while (std::next_permutation(perm.begin(), perm.end(), less));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic dataset generator.
//
// Concepts pair a column name with one synonym. Numeric concepts own disjoint
// integer ranges and text concepts own disjoint word pools, so a value read
// from a question pins down its column even when the column phrase is
// dropped. The entity column holds two-word names, which makes the
// copy-from-question value mode assemble multi-token values.
// ---------------------------------------------------------------------------

namespace {

struct SynthConcept {
  const char* name;
  const char* synonym;
  bool numeric;
  int lo;
  int hi;          // numeric ranges are inclusive
  const char* const* pool;
  int pool_size;
};

constexpr const char* kCountries[] = {
    "spain",  "france", "italy",  "japan",  "brazil", "kenya",
    "canada", "norway", "egypt",  "chile",  "india",  "poland",
    "greece", "turkey", "mexico", "austria"};

constexpr SynthConcept kValueConcepts[] = {
    {"country", "nation", false, 0, 0, kCountries, 16},
    {"rank", "position", true, 1, 12, nullptr, 0},
    {"wins", "victories", true, 13, 39, nullptr, 0},
    {"points", "score", true, 40, 99, nullptr, 0},
    {"goals", "strikes", true, 100, 199, nullptr, 0},
    {"year", "season", true, 1950, 1999, nullptr, 0},
    {"attendance", "crowd", true, 2000, 2999, nullptr, 0},
};
constexpr int kNumValueConcepts = 7;

constexpr const char* kEntityNames[][2] = {
    {"player", "athlete"}, {"driver", "racer"},  {"artist", "singer"},
    {"coach", "trainer"},  {"captain", "leader"}, {"manager", "boss"}};
constexpr int kNumEntityConcepts = 6;

constexpr const char* kFirstNames[] = {
    "anna", "john", "maria", "peter", "lucy", "omar",  "ivan",
    "rosa", "kenji", "dina", "carl",  "mona", "felix", "sara",
    "hugo", "nina", "owen",  "lila",  "marc", "tessa"};
constexpr const char* kLastNames[] = {
    "nalick", "smith", "garcia", "chen",   "patel", "novak", "silva",
    "kim",    "ross",  "dubois", "weber",  "tanaka", "moreau", "lopez",
    "haas",   "berg",  "costa",  "szabo",  "young",  "mori"};
constexpr int kNumFirst = 20;
constexpr int kNumLast = 20;

constexpr const char* kNoiseWords[] = {"gamma", "delta", "zeta",
                                       "omega", "prime", "ultra"};
constexpr int kNumNoiseWords = 6;

// Lead template and its condition connective, '%' marks the select phrase.
struct LeadTemplate {
  const char* text;
};

constexpr LeadTemplate kLeadNone[] = {{"what is the % when"},
                                      {"show the % where"},
                                      {"tell me the % when"}};
constexpr LeadTemplate kLeadCount[] = {{"how many % when"},
                                       {"count the % where"}};
constexpr LeadTemplate kLeadMax[] = {{"what is the highest % when"},
                                     {"what is the top % when"}};
constexpr LeadTemplate kLeadMin[] = {{"what is the lowest % when"},
                                     {"what is the smallest % when"}};
constexpr LeadTemplate kLeadSum[] = {{"what is the total % when"},
                                     {"sum the % where"}};
constexpr LeadTemplate kLeadAvg[] = {{"what is the average % when"},
                                     {"what is the mean % when"}};

constexpr const char* kGtPhrases[] = {"is more than", "is above", "is over"};
constexpr const char* kLtPhrases[] = {"is less than", "is below", "is under"};

// Column composition of one generated table: index into the concept arrays.
struct TableConcepts {
  int entity;                  // kEntityNames index, always column 0
  std::vector<int> value;      // kValueConcepts indices for columns 1..
};

struct Generator {
  const SynthConfig& cfg;
  Rng rng;
  std::map<std::string, Table> tables;
  std::vector<std::string> table_ids;
  std::vector<TableConcepts> table_concepts;

  Generator(const SynthConfig& c, uint64_t seed) : cfg(c), rng(seed) {}

  int pool_cap(int full) const {
    return cfg.value_pool > 0 ? std::min(full, cfg.value_pool) : full;
  }

  int lead_cap(int full) const {
    return cfg.templates_per_shape > 0
               ? std::min(full, cfg.templates_per_shape)
               : full;
  }

  void make_one_table(int index) {
    int n_cols = cfg.min_cols + static_cast<int>(rng.uniform_int(
                                    cfg.max_cols - cfg.min_cols + 1));
    int n_rows = cfg.min_rows + static_cast<int>(rng.uniform_int(
                                    cfg.max_rows - cfg.min_rows + 1));
    TableConcepts tc;
    tc.entity = static_cast<int>(rng.uniform_int(kNumEntityConcepts));
    std::vector<int> all(kNumValueConcepts);
    for (int i = 0; i < kNumValueConcepts; ++i) all[i] = i;
    rng.shuffle(all);
    tc.value.assign(all.begin(), all.begin() + (n_cols - 1));

    std::vector<std::string> header;
    header.push_back(kEntityNames[tc.entity][0]);
    for (int c : tc.value) header.push_back(kValueConcepts[c].name);

    // Entity column: distinct two-word names.
    std::vector<std::string> entities;
    std::set<std::pair<int, int>> used;
    while (static_cast<int>(entities.size()) < n_rows) {
      int f = static_cast<int>(rng.uniform_int(kNumFirst));
      int l = static_cast<int>(rng.uniform_int(kNumLast));
      if (!used.insert({f, l}).second) continue;
      entities.push_back(std::string(kFirstNames[f]) + " " + kLastNames[l]);
    }

    std::vector<std::vector<std::string>> columns;
    columns.push_back(entities);
    for (int c : tc.value) {
      const SynthConcept& con = kValueConcepts[c];
      std::vector<std::string> vals;
      if (con.numeric) {
        int span = pool_cap(con.hi - con.lo + 1);
        std::set<int> taken;
        while (static_cast<int>(vals.size()) < n_rows) {
          int x = con.lo + static_cast<int>(rng.uniform_int(span));
          if (!taken.insert(x).second) continue;
          vals.push_back(std::to_string(x));
        }
      } else {
        std::vector<int> idx(pool_cap(con.pool_size));
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
        rng.shuffle(idx);
        for (int r = 0; r < n_rows; ++r) vals.push_back(con.pool[idx[r]]);
      }
      columns.push_back(std::move(vals));
    }

    std::vector<std::vector<std::string>> rows(n_rows);
    for (int r = 0; r < n_rows; ++r)
      for (int c = 0; c < n_cols; ++c) rows[r].push_back(columns[c][r]);

    char id[16];
    std::snprintf(id, sizeof(id), "t%03d", index);
    tables[id] = make_table(id, header, rows);
    table_ids.push_back(id);
    table_concepts.push_back(std::move(tc));
  }

  // The concept behind a column: entity concept for column 0.
  std::string column_phrase(int table_index, int col) {
    bool synonym = rng.uniform01() < cfg.synonym_rate;
    const TableConcepts& tc = table_concepts[table_index];
    if (col == 0) return kEntityNames[tc.entity][synonym ? 1 : 0];
    const SynthConcept& con = kValueConcepts[tc.value[col - 1]];
    return synonym ? con.synonym : con.name;
  }

  bool column_is_numeric(int table_index, int col) {
    if (col == 0) return false;
    const TableConcepts& tc = table_concepts[table_index];
    return kValueConcepts[tc.value[col - 1]].numeric;
  }

  bool value_unique_in_table(const Table& t, const std::string& value) {
    int hits = 0;
    for (const auto& row : t.rows)
      for (const Cell& c : row)
        if (c.raw == value) ++hits;
    return hits == 1;
  }

  Example make_one_example(int table_index) {
    const Table& t = tables.at(table_ids[table_index]);
    int n_cols = t.n_cols();
    int n_rows = t.n_rows();

    static const double kCondWeights3[] = {0.45, 0.35, 0.20};
    static const double kCondWeights2[] = {0.60, 0.40};
    std::vector<double> weights;
    for (int i = 0; i < cfg.max_conds; ++i)
      weights.push_back(cfg.max_conds >= 3   ? kCondWeights3[std::min(i, 2)]
                        : cfg.max_conds == 2 ? kCondWeights2[i]
                                             : 1.0);
    int n_conds = 1 + static_cast<int>(rng.categorical(weights));
    int anchor = static_cast<int>(rng.uniform_int(n_rows));

    std::vector<int> cols(n_cols);
    for (int i = 0; i < n_cols; ++i) cols[i] = i;
    rng.shuffle(cols);

    SqlQuery q;
    for (int k = 0; k < n_conds; ++k) {
      int col = cols[k];
      const std::string& anchor_val = t.rows[anchor][col].raw;
      Cond c;
      c.col = col;
      c.op = CondOp::Eq;
      c.value = anchor_val;
      if (column_is_numeric(table_index, col)) {
        double op_roll = rng.uniform01();
        double anum = *parse_number(anchor_val);
        if (op_roll < 2.0 / 3.0) {
          bool want_gt = op_roll < 1.0 / 3.0;
          std::vector<const std::string*> thresholds;
          for (const auto& row : t.rows) {
            double x = *parse_number(row[col].raw);
            if (want_gt ? x < anum : x > anum)
              thresholds.push_back(&row[col].raw);
          }
          if (!thresholds.empty()) {
            c.op = want_gt ? CondOp::Gt : CondOp::Lt;
            c.value =
                *thresholds[rng.uniform_int(static_cast<int>(thresholds.size()))];
          }
        }
      }
      q.conds.push_back(std::move(c));
    }

    static const double kAggWeights[] = {0.50, 0.10, 0.10, 0.20, 0.05, 0.05};
    int agg_pick = static_cast<int>(
        rng.categorical(std::vector<double>(kAggWeights, kAggWeights + 6)));
    q.agg = static_cast<Agg>(agg_pick);
    if (q.agg == Agg::Count) {
      q.sel = 0;
    } else if (q.agg != Agg::None) {
      std::vector<int> numeric_cols;
      for (int c = 0; c < n_cols; ++c)
        if (column_is_numeric(table_index, c)) numeric_cols.push_back(c);
      if (numeric_cols.empty())
        q.agg = Agg::None;
      else
        q.sel = numeric_cols[rng.uniform_int(
            static_cast<int>(numeric_cols.size()))];
    }
    if (q.agg == Agg::None)
      q.sel = static_cast<int>(rng.uniform_int(n_cols));

    Example ex;
    ex.table_id = table_ids[table_index];
    ex.gold = q;
    ex.question = verbalize(table_index, t, q);

    if (validate(q, t) != InvalidReason::None)
      throw NumericError("synth: generated an invalid gold query");
    ExecutionResult res = execute(q, t);
    bool non_empty = res.ok() && (res.is_list ? !res.values.empty()
                                              : !res.is_null_scalar());
    if (!non_empty)
      throw NumericError("synth: generated an empty execution result");
    return ex;
  }

  std::vector<std::string> verbalize(int table_index, const Table& t,
                                     const SqlQuery& q) {
    const LeadTemplate* leads = kLeadNone;
    int n_leads = 3;
    switch (q.agg) {
      case Agg::None: break;
      case Agg::Count: leads = kLeadCount; n_leads = 2; break;
      case Agg::Max: leads = kLeadMax; n_leads = 2; break;
      case Agg::Min: leads = kLeadMin; n_leads = 2; break;
      case Agg::Sum: leads = kLeadSum; n_leads = 2; break;
      case Agg::Avg: leads = kLeadAvg; n_leads = 2; break;
    }
    n_leads = lead_cap(n_leads);
    std::string lead = leads[rng.uniform_int(n_leads)].text;
    std::string sel_phrase = column_phrase(table_index, q.sel);
    size_t pct = lead.find('%');
    lead = lead.substr(0, pct) + sel_phrase + lead.substr(pct + 1);

    std::string text = lead;
    for (size_t i = 0; i < q.conds.size(); ++i) {
      const Cond& c = q.conds[i];
      if (i) text += " and";
      std::string value_text = c.value;
      if (rng.uniform01() < cfg.value_noise) {
        std::vector<std::string> words = tokenize(value_text);
        size_t w = static_cast<size_t>(
            rng.uniform_int(static_cast<int>(words.size())));
        words[w] = kNoiseWords[rng.uniform_int(kNumNoiseWords)];
        value_text = join_tokens(words);
      }
      if (c.op == CondOp::Eq) {
        bool drop = rng.uniform01() < cfg.drop_col_phrase &&
                    value_unique_in_table(t, c.value);
        if (drop) {
          text += " " + value_text;
        } else {
          text += " " + column_phrase(table_index, c.col) + " is " +
                  value_text;
        }
      } else {
        const char* const* phrases =
            c.op == CondOp::Gt ? kGtPhrases : kLtPhrases;
        text += " " + column_phrase(table_index, c.col) + " " +
                phrases[rng.uniform_int(3)] + " " + value_text;
      }
    }
    return tokenize(text);
  }
};

}  // namespace

SynthData synth_dataset(const SynthConfig& cfg, uint64_t seed) {
  if (cfg.min_cols < 2 || cfg.max_cols < cfg.min_cols)
    throw DataError("synth: need at least 2 columns");
  if (cfg.max_cols - 1 > kNumValueConcepts)
    throw DataError("synth: at most " +
                    std::to_string(kNumValueConcepts + 1) + " columns");
  if (cfg.min_rows < 1 || cfg.max_rows < cfg.min_rows)
    throw DataError("synth: bad row range");
  if (cfg.max_rows > 12)
    throw DataError("synth: at most 12 rows (smallest value pool)");
  if (cfg.value_pool > 0 && cfg.max_rows > cfg.value_pool)
    throw DataError("synth: value_pool smaller than max_rows");
  if (cfg.max_conds < 1 || cfg.max_conds > cfg.min_cols)
    throw DataError("synth: more conditions than columns");
  if (cfg.n_tables < 1) throw DataError("synth: need at least one table");
  if (cfg.n_train < 0 || cfg.n_dev < 0 || cfg.n_test < 0 ||
      cfg.n_train + cfg.n_dev + cfg.n_test == 0)
    throw DataError("synth: no examples requested");

  bool needs_eval_tables = cfg.n_dev + cfg.n_test > 0;
  int n_train_tables = cfg.n_tables;
  if (needs_eval_tables) {
    n_train_tables = std::max(1, (cfg.n_tables * 4) / 5);
    if (n_train_tables == cfg.n_tables) n_train_tables = cfg.n_tables - 1;
    if (n_train_tables < 1)
      throw DataError("synth: need at least 2 tables for held-out splits");
  }

  Generator gen(cfg, seed);
  for (int i = 0; i < cfg.n_tables; ++i) gen.make_one_table(i);

  SynthData out;
  auto fill = [&](std::vector<Example>& dst, int count, int lo, int hi) {
    for (int i = 0; i < count; ++i) {
      int table_index = lo + static_cast<int>(gen.rng.uniform_int(hi - lo));
      dst.push_back(gen.make_one_example(table_index));
    }
  };
  fill(out.train, cfg.n_train, 0, n_train_tables);
  int eval_lo = needs_eval_tables ? n_train_tables : 0;
  fill(out.dev, cfg.n_dev, eval_lo, cfg.n_tables);
  fill(out.test, cfg.n_test, eval_lo, cfg.n_tables);
  out.tables = std::move(gen.tables);
  return out;
}

}  // namespace stamp
