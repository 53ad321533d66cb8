// SPDX-License-Identifier: Apache-2.0
#include "stamp/model.hpp"

#include <algorithm>
#include <unordered_map>

#include "stamp/common.hpp"
#include "stamp/text.hpp"

namespace stamp {

namespace {

std::string need(const std::map<std::string, std::string>& kv,
                 const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError("config missing key: " + key);
  return it->second;
}

int need_int(const std::map<std::string, std::string>& kv,
             const std::string& key) {
  auto n = parse_number(need(kv, key));
  if (!n) throw DataError("config key is not a number: " + key);
  return static_cast<int>(*n);
}

double need_double(const std::map<std::string, std::string>& kv,
                   const std::string& key) {
  auto n = parse_number(need(kv, key));
  if (!n) throw DataError("config key is not a number: " + key);
  return *n;
}

bool need_bool(const std::map<std::string, std::string>& kv,
               const std::string& key) {
  std::string v = need(kv, key);
  if (v == "0") return false;
  if (v == "1") return true;
  throw DataError("config key is not 0/1: " + key);
}

}  // namespace

std::map<std::string, std::string> ModelConfig::to_config() const {
  std::map<std::string, std::string> kv;
  kv["h"] = std::to_string(h);
  kv["d_word"] = std::to_string(d_word);
  kv["d_sub"] = std::to_string(d_sub);
  kv["ngram_min"] = std::to_string(ngram_min);
  kv["ngram_max"] = std::to_string(ngram_max);
  kv["lambda"] = format_double(lambda);
  kv["emb_clamp"] = format_double(emb_clamp);
  kv["max_len"] = std::to_string(max_len);
  kv["grammar_mask"] = grammar_mask ? "1" : "0";
  kv["disable_cell_channel"] = disable_cell_channel ? "1" : "0";
  kv["disable_column_cell"] = disable_column_cell ? "1" : "0";
  return kv;
}

ModelConfig ModelConfig::from_config(
    const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  c.h = need_int(kv, "h");
  c.d_word = need_int(kv, "d_word");
  c.d_sub = need_int(kv, "d_sub");
  c.ngram_min = need_int(kv, "ngram_min");
  c.ngram_max = need_int(kv, "ngram_max");
  c.lambda = need_double(kv, "lambda");
  c.emb_clamp = need_double(kv, "emb_clamp");
  c.max_len = need_int(kv, "max_len");
  c.grammar_mask = need_bool(kv, "grammar_mask");
  c.disable_cell_channel = need_bool(kv, "disable_cell_channel");
  c.disable_column_cell = need_bool(kv, "disable_column_cell");
  if (c.h < 1 || c.d_word < 1 || c.d_sub < 1 || c.max_len < 3)
    throw DataError("config dimensions out of range");
  return c;
}

ModelParams::ModelParams(const ModelConfig& config, Vocab voc)
    : cfg(config), vocab(std::move(voc)) {
  if (vocab.ngram_min != cfg.ngram_min || vocab.ngram_max != cfg.ngram_max)
    throw DataError("n-gram range mismatch between config and vocabulary");
  const int d = cfg.d_emb();
  const int s = cfg.state();
  emb = EmbeddingTable(static_cast<int>(vocab.words.size()),
                       static_cast<int>(vocab.ngrams.size()), cfg.d_word,
                       cfg.d_sub);
  q_fwd = GruParams("enc.q.fwd", d, cfg.h);
  q_bwd = GruParams("enc.q.bwd", d, cfg.h);
  u_fwd = GruParams("enc.u.fwd", d, cfg.h);
  u_bwd = GruParams("enc.u.bwd", d, cfg.h);
  dec = GruParams("dec", s, s);
  e_sql = Param("e_sql", kSqlChannelSize, s);
  w_sql = Param("w_sql", s, 2 * s);
  v_sql = Param("v_sql", 1, s);
  w_col = Param("w_col", s, cfg.enhanced_columns() ? 4 * s : 3 * s);
  v_col = Param("v_col", 1, s);
  w_cell = Param("w_cell", s, 2 * s);
  v_cell = Param("v_cell", 1, s);
  w_gate = Param("w_gate", 3, s);
  b_gate = Param("b_gate", 1, 3);
  proj_kw = Param("proj.kw", s, s);
  proj_col = Param("proj.col", s, cfg.enhanced_columns() ? 2 * s : s);
  proj_cell = Param("proj.cell", s, s);
}

std::vector<Param*> ModelParams::all() {
  std::vector<Param*> out;
  emb.collect(out);
  q_fwd.collect(out);
  q_bwd.collect(out);
  u_fwd.collect(out);
  u_bwd.collect(out);
  dec.collect(out);
  for (Param* p : {&e_sql, &w_sql, &v_sql, &w_col, &v_col, &w_cell, &v_cell,
                   &w_gate, &b_gate, &proj_kw, &proj_col, &proj_cell})
    out.push_back(p);
  return out;
}

Checkpoint ModelParams::to_checkpoint() const {
  Checkpoint c;
  c.config = cfg.to_config();
  c.words = vocab.words;
  c.ngrams = vocab.ngrams;
  auto* self = const_cast<ModelParams*>(this);
  for (Param* p : self->all()) c.tensors.emplace_back(p->name, p->w);
  return c;
}

ModelParams ModelParams::from_checkpoint(const Checkpoint& c) {
  ModelConfig cfg = ModelConfig::from_config(c.config);
  Vocab v = Vocab::from_lists(c.words, c.ngrams, cfg.ngram_min, cfg.ngram_max);
  ModelParams p(cfg, std::move(v));
  std::vector<Param*> params = p.all();
  if (c.tensors.size() != params.size())
    throw DataError("checkpoint tensor count mismatch");
  for (Param* prm : params) {
    const Mat* m = c.find_tensor(prm->name);
    if (m == nullptr) throw DataError("checkpoint missing tensor " + prm->name);
    if (m->rows != prm->w.rows || m->cols != prm->w.cols)
      throw DataError("checkpoint shape mismatch for " + prm->name);
    prm->w = *m;
  }
  return p;
}

int channel_of(const DecoderToken& tok) {
  switch (tok.kind) {
    case TokenKind::Keyword:
    case TokenKind::End:
      return kChannelSql;
    case TokenKind::Column:
      return kChannelColumn;
    case TokenKind::Cell:
    case TokenKind::QuestionWord:
      return kChannelCell;
  }
  throw NumericError("unknown token kind");
}

// ---------------------------------------------------------------------------
// Encoding

namespace {

// One GRU direction over a token sequence; states are returned in position
// order regardless of direction, so reverse[i] summarizes the suffix from i.
std::vector<Tape::ExprId> run_direction(Tape& tape, GruParams& g,
                                        const std::vector<Tape::ExprId>& xs,
                                        bool reverse) {
  std::vector<Tape::ExprId> states(xs.size());
  Tape::ExprId h = tape.zeros(g.hidden_size());
  int n = static_cast<int>(xs.size());
  for (int step = 0; step < n; ++step) {
    int i = reverse ? n - 1 - step : step;
    h = gru_expr(tape, g, xs[i], h);
    states[i] = h;
  }
  return states;
}

struct EncodeCache {
  std::unordered_map<std::string, Tape::ExprId> embeds;
  std::unordered_map<std::string, Tape::ExprId> units;
};

Tape::ExprId embed_cached(Tape& tape, ModelParams& p, EncodeCache& cache,
                          const std::string& token) {
  auto it = cache.embeds.find(token);
  if (it != cache.embeds.end()) return it->second;
  Tape::ExprId e = p.emb.embed_expr(tape, p.vocab, token);
  cache.embeds.emplace(token, e);
  return e;
}

// Bidirectional unit vector for a column name or cell: [fwd_last ; bwd_first].
// Tokens never contain whitespace, so a space join is an injective cache key.
Tape::ExprId unit_vector(Tape& tape, ModelParams& p, EncodeCache& cache,
                         const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw NumericError("cannot encode an empty unit");
  std::string key = join_tokens(tokens);
  auto it = cache.units.find(key);
  if (it != cache.units.end()) return it->second;
  std::vector<Tape::ExprId> xs;
  xs.reserve(tokens.size());
  for (const std::string& t : tokens) xs.push_back(embed_cached(tape, p, cache, t));
  std::vector<Tape::ExprId> fwd = run_direction(tape, p.u_fwd, xs, false);
  std::vector<Tape::ExprId> bwd = run_direction(tape, p.u_bwd, xs, true);
  Tape::ExprId v = tape.concat({fwd.back(), bwd.front()});
  cache.units.emplace(std::move(key), v);
  return v;
}

}  // namespace

EncodedContext encode(Tape& tape, ModelParams& p,
                      const std::vector<std::string>& question,
                      const Table& table) {
  if (question.empty()) throw NumericError("encode requires a non-empty question");
  if (table.n_cols() == 0) throw NumericError("encode requires a non-empty table");
  EncodedContext ctx;
  ctx.question = &question;
  ctx.table = &table;
  EncodeCache cache;

  std::vector<Tape::ExprId> xs;
  xs.reserve(question.size());
  for (const std::string& t : question)
    xs.push_back(embed_cached(tape, p, cache, t));
  std::vector<Tape::ExprId> fwd = run_direction(tape, p.q_fwd, xs, false);
  std::vector<Tape::ExprId> bwd = run_direction(tape, p.q_bwd, xs, true);
  ctx.q_states.reserve(xs.size());
  for (size_t i = 0; i < xs.size(); ++i)
    ctx.q_states.push_back(tape.concat({fwd[i], bwd[i]}));
  ctx.q_summary = tape.concat({fwd.back(), bwd.front()});

  const int n_cols = table.n_cols();
  const int n_rows = table.n_rows();
  ctx.col_base.reserve(n_cols);
  for (int c = 0; c < n_cols; ++c)
    ctx.col_base.push_back(unit_vector(tape, p, cache, table.header_tokens[c]));

  if (!p.cfg.disable_cell_channel) {
    ctx.cells.assign(n_cols, {});
    for (int c = 0; c < n_cols; ++c) {
      ctx.cells[c].reserve(n_rows);
      for (int r = 0; r < n_rows; ++r)
        ctx.cells[c].push_back(
            unit_vector(tape, p, cache, table.rows[r][c].tokens));
    }
    ctx.alpha = overlap_weights(question, table);
  }

  ctx.col_enhanced.reserve(n_cols);
  for (int c = 0; c < n_cols; ++c) {
    if (p.cfg.enhanced_columns()) {
      Tape::ExprId cell_part =
          n_rows > 0
              ? tape.weighted_sum(tape.constant(ctx.alpha.alpha[c]),
                                  ctx.cells[c])
              : tape.zeros(p.cfg.state());
      ctx.col_enhanced.push_back(tape.concat({ctx.col_base[c], cell_part}));
    } else {
      ctx.col_enhanced.push_back(ctx.col_base[c]);
    }
  }
  return ctx;
}

// ---------------------------------------------------------------------------
// Decoder state

DecodeState init_state(const EncodedContext& ctx) {
  DecodeState s;
  s.h = ctx.q_summary;
  return s;
}

void advance_state(Tape& tape, ModelParams& p, const EncodedContext& ctx,
                   DecodeState& state) {
  Tape::ExprId input = -1;
  if (state.emitted.empty()) {
    input = tape.zeros(p.cfg.state());
  } else {
    const DecoderToken& tok = state.emitted.back();
    switch (tok.kind) {
      case TokenKind::Keyword:
        input = tape.matvec(p.proj_kw,
                            tape.param_row(p.e_sql, static_cast<int>(tok.kw)));
        break;
      case TokenKind::Column:
        if (tok.col < 0 || tok.col >= ctx.table->n_cols())
          throw NumericError("column token out of range");
        input = tape.matvec(p.proj_col, ctx.col_enhanced[tok.col]);
        break;
      case TokenKind::Cell:
        if (tok.col < 0 || tok.col >= static_cast<int>(ctx.cells.size()) ||
            tok.row < 0 ||
            tok.row >= static_cast<int>(ctx.cells[tok.col].size()))
          throw NumericError("cell token out of range");
        input = tape.matvec(p.proj_cell, ctx.cells[tok.col][tok.row]);
        break;
      case TokenKind::QuestionWord:
        if (tok.qpos < 0 ||
            tok.qpos >= static_cast<int>(ctx.q_states.size()))
          throw NumericError("question word token out of range");
        input = tape.matvec(p.proj_cell, ctx.q_states[tok.qpos]);
        break;
      case TokenKind::End:
        throw NumericError("cannot advance past End");
    }
  }
  state.h = gru_expr(tape, p.dec, input, state.h);
}

namespace {

GrammarState grammar_transition(GrammarState g, const DecoderToken& tok) {
  switch (tok.kind) {
    case TokenKind::Keyword:
      switch (tok.kw) {
        case Keyword::Select:
          return GrammarState::kAfterSelect;
        case Keyword::Max:
        case Keyword::Min:
        case Keyword::Count:
          return GrammarState::kAfterAgg;
        case Keyword::Sum:
        case Keyword::Avg:
          return GrammarState::kAfterAggNumeric;
        case Keyword::Where:
        case Keyword::And:
          return GrammarState::kAfterWhereAnd;
        case Keyword::Eq:
        case Keyword::Gt:
        case Keyword::Lt:
          return GrammarState::kAfterOp;
      }
      return g;
    case TokenKind::Column:
      return g == GrammarState::kAfterWhereAnd ? GrammarState::kAfterCondCol
                                               : GrammarState::kAfterSelCol;
    case TokenKind::Cell:
    case TokenKind::QuestionWord:
      return GrammarState::kAfterValue;
    case TokenKind::End:
      return GrammarState::kDone;
  }
  return g;
}

// Fewest further tokens needed to reach End from a grammar state.
int min_steps(GrammarState g) {
  switch (g) {
    case GrammarState::kStart:
      return 3;
    case GrammarState::kAfterSelect:
    case GrammarState::kAfterAgg:
    case GrammarState::kAfterAggNumeric:
    case GrammarState::kAfterOp:
      return 2;
    case GrammarState::kAfterSelCol:
    case GrammarState::kAfterValue:
      return 1;
    case GrammarState::kAfterWhereAnd:
      return 4;
    case GrammarState::kAfterCondCol:
      return 3;
    case GrammarState::kDone:
      return 0;
  }
  return 0;
}

struct CandidateSets {
  std::vector<DecoderToken> sql;
  std::vector<DecoderToken> col;
  std::vector<DecoderToken> cell;
};

// Candidate tokens with the grammar mask off: every keyword and column is
// always on the table; value tokens require a preceding condition column.
CandidateSets unmasked_candidates(const ModelParams& p,
                                  const EncodedContext& ctx,
                                  const DecodeState& state) {
  CandidateSets cs;
  cs.sql.reserve(kSqlChannelSize);
  for (int k = 0; k < kNumKeywords; ++k)
    cs.sql.push_back(DecoderToken::keyword(static_cast<Keyword>(k)));
  cs.sql.push_back(DecoderToken::end());
  const int n_cols = ctx.table->n_cols();
  cs.col.reserve(n_cols);
  for (int c = 0; c < n_cols; ++c) cs.col.push_back(DecoderToken::column(c));
  if (state.last_column >= 0) {
    if (p.cfg.disable_cell_channel) {
      const int n = static_cast<int>(ctx.q_states.size());
      cs.cell.reserve(n);
      for (int i = 0; i < n; ++i)
        cs.cell.push_back(DecoderToken::question_word(i));
    } else if (ctx.table->n_rows() > 0) {
      const int n_rows = ctx.table->n_rows();
      cs.cell.reserve(n_rows);
      for (int r = 0; r < n_rows; ++r)
        cs.cell.push_back(DecoderToken::cell(state.last_column, r));
    }
  }
  return cs;
}

// Candidate tokens under the grammar mask. Every admitted token leads to a
// state whose completion still fits in the remaining budget, so masked
// decoding always ends with End and delinearizes to a valid query.
CandidateSets masked_candidates(const ModelParams& p, const EncodedContext& ctx,
                                const DecodeState& state) {
  const Table& t = *ctx.table;
  const int left_after = p.cfg.max_len -
                         static_cast<int>(state.emitted.size()) - 1;
  auto fits = [&](GrammarState next) { return min_steps(next) <= left_after; };
  auto any_numeric = [&]() {
    for (int c = 0; c < t.n_cols(); ++c)
      if (t.column_all_numeric(c)) return true;
    return false;
  };
  CandidateSets cs;
  auto push_kw = [&](Keyword k) {
    DecoderToken tok = DecoderToken::keyword(k);
    if (fits(grammar_transition(state.grammar, tok))) cs.sql.push_back(tok);
  };
  auto push_cols = [&](bool numeric_only) {
    if (!fits(grammar_transition(state.grammar, DecoderToken::column(0))))
      return;
    for (int c = 0; c < t.n_cols(); ++c)
      if (!numeric_only || t.column_all_numeric(c))
        cs.col.push_back(DecoderToken::column(c));
  };
  auto push_values = [&]() {
    if (!fits(GrammarState::kAfterValue)) return;
    if (p.cfg.disable_cell_channel) {
      for (int i = 0; i < static_cast<int>(ctx.q_states.size()); ++i)
        cs.cell.push_back(DecoderToken::question_word(i));
    } else if (state.last_column >= 0 && t.n_rows() > 0) {
      for (int r = 0; r < t.n_rows(); ++r)
        cs.cell.push_back(DecoderToken::cell(state.last_column, r));
    }
  };
  switch (state.grammar) {
    case GrammarState::kStart:
      push_kw(Keyword::Select);
      break;
    case GrammarState::kAfterSelect:
      push_kw(Keyword::Max);
      push_kw(Keyword::Min);
      push_kw(Keyword::Count);
      if (any_numeric()) {
        push_kw(Keyword::Sum);
        push_kw(Keyword::Avg);
      }
      push_cols(false);
      break;
    case GrammarState::kAfterAgg:
      push_cols(false);
      break;
    case GrammarState::kAfterAggNumeric:
      push_cols(true);
      break;
    case GrammarState::kAfterSelCol:
    case GrammarState::kAfterValue: {
      cs.sql.push_back(DecoderToken::end());
      // A further condition needs a value source: cells in the full model,
      // question words otherwise.
      bool can_condition =
          p.cfg.disable_cell_channel ? !ctx.q_states.empty() : t.n_rows() > 0;
      if (can_condition) {
        if (state.grammar == GrammarState::kAfterSelCol)
          push_kw(Keyword::Where);
        else
          push_kw(Keyword::And);
      }
      if (state.grammar == GrammarState::kAfterValue &&
          p.cfg.disable_cell_channel)
        push_values();  // multi-word values continue the run
      break;
    }
    case GrammarState::kAfterWhereAnd:
      push_cols(false);
      break;
    case GrammarState::kAfterCondCol:
      push_kw(Keyword::Eq);
      push_kw(Keyword::Gt);
      push_kw(Keyword::Lt);
      break;
    case GrammarState::kAfterOp:
      push_values();
      break;
    case GrammarState::kDone:
      throw NumericError("cannot continue a finished sequence");
  }
  return cs;
}

// Attention energy v . tanh(W [h ; unit]). The hidden layer is what lets the
// decoder state influence the softmax: a purely linear map of the
// concatenation would add the same h term to every candidate and cancel.
Tape::ExprId attn_score(Tape& tape, Param& w, Param& v, Tape::ExprId input) {
  return tape.matvec(v, tape.tanh(tape.matvec(w, input)));
}

Tape::ExprId sql_dist_expr(Tape& tape, ModelParams& p, Tape::ExprId h,
                           const std::vector<DecoderToken>& cands) {
  std::vector<Tape::ExprId> scores;
  scores.reserve(cands.size());
  for (const DecoderToken& tok : cands) {
    int idx = tok.kind == TokenKind::End ? kEndIndex : static_cast<int>(tok.kw);
    scores.push_back(
        attn_score(tape, p.w_sql, p.v_sql,
                   tape.concat({h, tape.param_row(p.e_sql, idx)})));
  }
  return tape.softmax(tape.concat(scores));
}

Tape::ExprId col_dist_expr(Tape& tape, ModelParams& p,
                           const EncodedContext& ctx, Tape::ExprId h,
                           const std::vector<DecoderToken>& cands) {
  std::vector<Tape::ExprId> scores;
  scores.reserve(cands.size());
  for (const DecoderToken& tok : cands)
    scores.push_back(attn_score(
        tape, p.w_col, p.v_col,
        tape.concat({h, ctx.q_summary, ctx.col_enhanced[tok.col]})));
  return tape.softmax(tape.concat(scores));
}

Tape::ExprId cell_dist_expr(Tape& tape, ModelParams& p,
                            const EncodedContext& ctx, Tape::ExprId h,
                            const std::vector<DecoderToken>& cands) {
  std::vector<Tape::ExprId> scores;
  scores.reserve(cands.size());
  for (const DecoderToken& tok : cands) {
    Tape::ExprId unit = tok.kind == TokenKind::QuestionWord
                            ? ctx.q_states[tok.qpos]
                            : ctx.cells[tok.col][tok.row];
    scores.push_back(
        attn_score(tape, p.w_cell, p.v_cell, tape.concat({h, unit})));
  }
  Tape::ExprId attn = tape.softmax(tape.concat(scores));
  if (cands[0].kind == TokenKind::QuestionWord) return attn;

  // Full model: mix learned attention with the constant overlap weights,
  // renormalized over this step's candidate rows.
  const double lambda = p.cfg.lambda;
  if (lambda >= 1.0) return attn;
  const Vec& alpha = ctx.alpha.alpha[cands[0].col];
  Vec prior(cands.size(), 0.0);
  double total = 0.0;
  for (size_t i = 0; i < cands.size(); ++i) total += alpha[cands[i].row];
  for (size_t i = 0; i < cands.size(); ++i)
    prior[i] = total > 0.0 ? alpha[cands[i].row] / total
                           : 1.0 / static_cast<double>(cands.size());
  for (double& x : prior) x *= 1.0 - lambda;
  if (lambda <= 0.0) return tape.constant(prior);
  return tape.add(tape.scale(attn, lambda), tape.constant(prior));
}

Tape::ExprId gate_logits_expr(Tape& tape, ModelParams& p, Tape::ExprId h) {
  return tape.add(tape.matvec(p.w_gate, h), tape.param_row(p.b_gate, 0));
}

}  // namespace

int StepExprs::gate_position(int channel) const {
  for (size_t i = 0; i < avail.size(); ++i)
    if (avail[i] == channel) return static_cast<int>(i);
  return -1;
}

const std::vector<DecoderToken>& StepExprs::cands(int channel) const {
  switch (channel) {
    case kChannelSql:
      return sql_cands;
    case kChannelColumn:
      return col_cands;
    default:
      return cell_cands;
  }
}

Tape::ExprId StepExprs::dist(int channel) const {
  switch (channel) {
    case kChannelSql:
      return sql_dist;
    case kChannelColumn:
      return col_dist;
    default:
      return cell_dist;
  }
}

StepExprs build_step_exprs(Tape& tape, ModelParams& p,
                           const EncodedContext& ctx, const DecodeState& state,
                           bool all_channels, int gold_channel) {
  StepExprs se;
  CandidateSets cs = p.cfg.grammar_mask ? masked_candidates(p, ctx, state)
                                        : unmasked_candidates(p, ctx, state);
  se.sql_cands = std::move(cs.sql);
  se.col_cands = std::move(cs.col);
  se.cell_cands = std::move(cs.cell);
  if (!se.sql_cands.empty()) se.avail.push_back(kChannelSql);
  if (!se.col_cands.empty()) se.avail.push_back(kChannelColumn);
  if (!se.cell_cands.empty()) se.avail.push_back(kChannelCell);
  if (se.avail.empty()) throw NumericError("no channel available at this step");

  Tape::ExprId logits = gate_logits_expr(tape, p, state.h);
  se.gate_dist = se.avail.size() == 3
                     ? tape.softmax(logits)
                     : tape.softmax(tape.gather(logits, se.avail));

  auto want = [&](int channel) {
    return all_channels || channel == gold_channel;
  };
  if (!se.sql_cands.empty() && want(kChannelSql))
    se.sql_dist = sql_dist_expr(tape, p, state.h, se.sql_cands);
  if (!se.col_cands.empty() && want(kChannelColumn))
    se.col_dist = col_dist_expr(tape, p, ctx, state.h, se.col_cands);
  if (!se.cell_cands.empty() && want(kChannelCell))
    se.cell_dist = cell_dist_expr(tape, p, ctx, state.h, se.cell_cands);
  return se;
}

Tape::ExprId joint_expr(Tape& tape, const StepExprs& se) {
  std::vector<Tape::ExprId> parts;
  parts.reserve(se.avail.size());
  for (size_t i = 0; i < se.avail.size(); ++i) {
    Tape::ExprId d = se.dist(se.avail[i]);
    if (d < 0) throw NumericError("joint requires all channel distributions");
    parts.push_back(
        tape.mul_sv(tape.pick(se.gate_dist, static_cast<int>(i)), d));
  }
  return tape.concat(parts);
}

void commit_token(DecodeState& state, const DecoderToken& tok) {
  state.emitted.push_back(tok);
  if (tok.kind == TokenKind::Keyword && tok.kw == Keyword::Where)
    state.where_seen = true;
  if (tok.kind == TokenKind::Column && state.where_seen)
    state.last_column = tok.col;
  state.grammar = grammar_transition(state.grammar, tok);
}

StepDistribution step(Tape& tape, ModelParams& p, const EncodedContext& ctx,
                      const DecodeState& state) {
  StepExprs se = build_step_exprs(tape, p, ctx, state, true);
  StepDistribution d;
  d.gate.assign(3, 0.0);
  Vec g = tape.value_vec(se.gate_dist);
  for (size_t i = 0; i < se.avail.size(); ++i) d.gate[se.avail[i]] = g[i];
  if (se.sql_dist >= 0) d.sql = tape.value_vec(se.sql_dist);
  if (se.col_dist >= 0) d.column = tape.value_vec(se.col_dist);
  if (se.cell_dist >= 0) d.cell = tape.value_vec(se.cell_dist);
  for (size_t i = 0; i < se.avail.size(); ++i) {
    int ch = se.avail[i];
    const std::vector<DecoderToken>& cands = se.cands(ch);
    const Vec& dist = ch == kChannelSql
                          ? d.sql
                          : (ch == kChannelColumn ? d.column : d.cell);
    for (size_t j = 0; j < cands.size(); ++j) {
      d.candidates.push_back(cands[j]);
      d.joint.push_back(g[i] * dist[j]);
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Spec-level channel views

Vec gate_dist(Tape& tape, ModelParams& p, Tape::ExprId h_dec) {
  return tape.value_vec(tape.softmax(gate_logits_expr(tape, p, h_dec)));
}

Vec channel_sql(Tape& tape, ModelParams& p, Tape::ExprId h_dec) {
  std::vector<DecoderToken> cands;
  for (int k = 0; k < kNumKeywords; ++k)
    cands.push_back(DecoderToken::keyword(static_cast<Keyword>(k)));
  cands.push_back(DecoderToken::end());
  return tape.value_vec(sql_dist_expr(tape, p, h_dec, cands));
}

Vec channel_column(Tape& tape, ModelParams& p, const EncodedContext& ctx,
                   Tape::ExprId h_dec) {
  std::vector<DecoderToken> cands;
  for (int c = 0; c < ctx.table->n_cols(); ++c)
    cands.push_back(DecoderToken::column(c));
  return tape.value_vec(col_dist_expr(tape, p, ctx, h_dec, cands));
}

Vec channel_cell(Tape& tape, ModelParams& p, const EncodedContext& ctx,
                 Tape::ExprId h_dec, int last_column) {
  std::vector<DecoderToken> cands;
  if (p.cfg.disable_cell_channel) {
    for (int i = 0; i < static_cast<int>(ctx.q_states.size()); ++i)
      cands.push_back(DecoderToken::question_word(i));
  } else {
    if (last_column < 0 || last_column >= ctx.table->n_cols())
      throw NumericError("cell channel requires a preceding condition column");
    for (int r = 0; r < ctx.table->n_rows(); ++r)
      cands.push_back(DecoderToken::cell(last_column, r));
  }
  if (cands.empty()) throw NumericError("cell channel has no candidates");
  return tape.value_vec(cell_dist_expr(tape, p, ctx, h_dec, cands));
}

// ---------------------------------------------------------------------------
// Decoding, scoring, sampling

DecodeResult decode_greedy(Tape& tape, ModelParams& p,
                           const std::vector<std::string>& question,
                           const Table& table) {
  tape.reset();
  EncodedContext ctx = encode(tape, p, question, table);
  DecodeState st = init_state(ctx);
  DecodeResult out;
  for (int t = 0; t < p.cfg.max_len; ++t) {
    advance_state(tape, p, ctx, st);
    StepDistribution d = step(tape, p, ctx, st);
    size_t best = 0;
    for (size_t i = 1; i < d.joint.size(); ++i)
      if (d.joint[i] > d.joint[best]) best = i;
    const DecoderToken tok = d.candidates[best];
    commit_token(st, tok);
    if (tok.kind == TokenKind::End) {
      out.seq = st.emitted;
      return out;
    }
  }
  out.seq = st.emitted;
  out.truncated = true;
  return out;
}

SequenceScore sequence_log_prob(Tape& tape, ModelParams& p,
                                const EncodedContext& ctx,
                                const TokenSeq& gold) {
  if (gold.empty()) throw NumericError("cannot score an empty sequence");
  DecodeState st = init_state(ctx);
  SequenceScore score;
  std::vector<Tape::ExprId> terms;
  terms.reserve(2 * gold.size());
  for (size_t t = 0; t < gold.size(); ++t) {
    const DecoderToken& tok = gold[t];
    advance_state(tape, p, ctx, st);
    int channel = channel_of(tok);
    StepExprs se = build_step_exprs(tape, p, ctx, st, false, channel);
    int gpos = se.gate_position(channel);
    if (gpos < 0)
      throw NumericError("gold channel unavailable at step " +
                         std::to_string(t));
    const std::vector<DecoderToken>& cands = se.cands(channel);
    int idx = -1;
    for (size_t i = 0; i < cands.size(); ++i)
      if (cands[i] == tok) {
        idx = static_cast<int>(i);
        break;
      }
    if (idx < 0)
      throw NumericError("gold token outside channel support at step " +
                         std::to_string(t));
    Tape::ExprId gate_term = tape.log(tape.pick(se.gate_dist, gpos));
    Tape::ExprId token_term = tape.log(tape.pick(se.dist(channel), idx));
    score.gate_terms.push_back(tape.scalar(gate_term));
    score.token_terms.push_back(tape.scalar(token_term));
    terms.push_back(gate_term);
    terms.push_back(token_term);
    commit_token(st, tok);
  }
  score.total_expr = tape.sum_list(terms);
  score.total = tape.scalar(score.total_expr);
  return score;
}

std::vector<SampleResult> sample(Tape& tape, ModelParams& p,
                                 const EncodedContext& ctx, Rng& rng, int k) {
  std::vector<SampleResult> out;
  out.reserve(k);
  for (int j = 0; j < k; ++j) {
    DecodeState st = init_state(ctx);
    SampleResult res;
    std::vector<Tape::ExprId> terms;
    res.truncated = true;
    for (int t = 0; t < p.cfg.max_len; ++t) {
      advance_state(tape, p, ctx, st);
      StepExprs se = build_step_exprs(tape, p, ctx, st, true);
      Vec g = tape.value_vec(se.gate_dist);
      int ci = rng.categorical(g);
      int channel = se.avail[ci];
      Tape::ExprId dist = se.dist(channel);
      int idx = rng.categorical(tape.value_vec(dist));
      terms.push_back(tape.log(tape.pick(se.gate_dist, ci)));
      terms.push_back(tape.log(tape.pick(dist, idx)));
      const DecoderToken tok = se.cands(channel)[idx];
      commit_token(st, tok);
      if (tok.kind == TokenKind::End) {
        res.truncated = false;
        break;
      }
    }
    res.seq = st.emitted;
    res.log_prob_expr = tape.sum_list(terms);
    res.log_prob = tape.scalar(res.log_prob_expr);
    out.push_back(res);
  }
  return out;
}

}  // namespace stamp
