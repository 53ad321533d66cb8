// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "stamp/checkpoint.hpp"
#include "stamp/common.hpp"
#include "stamp/data.hpp"
#include "stamp/numerics.hpp"
#include "stamp/sqlast.hpp"
#include "stamp/table.hpp"

namespace stamp {

struct ModelConfig {
  int h = 64;           // per-direction encoder hidden size; decoder uses 2h
  int d_word = 32;
  int d_sub = 16;
  int ngram_min = 3;
  int ngram_max = 4;
  double lambda = 0.5;  // cell-channel mixture weight
  double emb_clamp = 3.0;
  int max_len = 32;
  bool grammar_mask = false;
  // Removes cell encodings entirely; condition values are copied from
  // question tokens through the value channel instead.
  bool disable_cell_channel = false;
  // Keeps the cell channel but drops the cell enhancement of column vectors.
  bool disable_column_cell = false;

  int d_emb() const { return d_word + d_sub; }
  int state() const { return 2 * h; }
  // Column vectors carry the weighted cell sum only in the full model.
  bool enhanced_columns() const {
    return !disable_cell_channel && !disable_column_cell;
  }

  std::map<std::string, std::string> to_config() const;
  static ModelConfig from_config(
      const std::map<std::string, std::string>& kv);
};

// Every learnable tensor, in a fixed registry order that determines both
// initialization sequence and checkpoint layout.
struct ModelParams {
  ModelConfig cfg;
  Vocab vocab;
  EmbeddingTable emb;
  GruParams q_fwd, q_bwd;  // question BiGRU
  GruParams u_fwd, u_bwd;  // unit BiGRU, shared by column names and cells
  GruParams dec;           // decoder GRU: input 2h, hidden 2h
  // Channel scorers are one-hidden-layer attention networks,
  // v . tanh(W [h ; unit]): a plain row vector on the concatenation would
  // cancel the h term under softmax and freeze each channel's distribution.
  Param e_sql;             // (kSqlChannelSize x 2h) keyword embeddings
  Param w_sql;             // 2h x 4h
  Param v_sql;             // 1 x 2h
  Param w_col;             // 2h x 8h, or 2h x 6h without column enhancement
  Param v_col;             // 1 x 2h
  Param w_cell;            // 2h x 4h; also scores question positions
  Param v_cell;            // 1 x 2h
  Param w_gate;            // 3 x 2h
  Param b_gate;            // 1 x 3
  Param proj_kw;           // 2h x 2h decoder-input projections
  Param proj_col;          // 2h x 4h (2h x 2h without enhancement)
  Param proj_cell;         // 2h x 2h

  ModelParams() = default;
  ModelParams(const ModelConfig& cfg, Vocab vocab);

  std::vector<Param*> all();
  void clamp_embeddings() { emb.clamp(cfg.emb_clamp); }
  Checkpoint to_checkpoint() const;
  static ModelParams from_checkpoint(const Checkpoint& c);
};

// Tape expressions for one (question, table) pair. Ids are only valid for
// the tape that built them.
struct EncodedContext {
  std::vector<Tape::ExprId> q_states;            // n x 2h
  Tape::ExprId q_summary = -1;                   // [fwd_n ; bwd_1]
  std::vector<Tape::ExprId> col_base;            // h_col per column
  std::vector<std::vector<Tape::ExprId>> cells;  // [col][row], empty when
                                                 // the cell channel is off
  std::vector<Tape::ExprId> col_enhanced;        // channel/score input form
  OverlapWeights alpha;
  const Table* table = nullptr;
  const std::vector<std::string>* question = nullptr;
};

EncodedContext encode(Tape& tape, ModelParams& p,
                      const std::vector<std::string>& question,
                      const Table& table);

// Grammar automaton states for constrained decoding.
enum class GrammarState : uint8_t {
  kStart = 0,
  kAfterSelect,
  kAfterAgg,
  kAfterAggNumeric,
  kAfterSelCol,
  kAfterWhereAnd,
  kAfterCondCol,
  kAfterOp,
  kAfterValue,
  kDone,
};

struct DecodeState {
  Tape::ExprId h = -1;   // decoder hidden, 2h
  int last_column = -1;  // set by Column tokens emitted after WHERE
  bool where_seen = false;
  GrammarState grammar = GrammarState::kStart;
  TokenSeq emitted;
};

// Fresh state with hidden = question summary and nothing emitted.
DecodeState init_state(const EncodedContext& ctx);

// Advances the decoder GRU by one step, feeding the projected vector of the
// most recently emitted token (zeros when nothing has been emitted).
void advance_state(Tape& tape, ModelParams& p, const EncodedContext& ctx,
                   DecodeState& state);

// Records an emitted token: sequence, WHERE flag, last column, grammar state.
void commit_token(DecodeState& state, const DecoderToken& tok);

// Channel ids in gate order.
inline constexpr int kChannelSql = 0;
inline constexpr int kChannelColumn = 1;
inline constexpr int kChannelCell = 2;

int channel_of(const DecoderToken& tok);

// One step's distributions as tape expressions. Candidate lists name the
// tokens each channel may emit this step; unavailable channels have empty
// candidate lists and dist = -1. gate_dist runs over `avail` only.
struct StepExprs {
  std::vector<int> avail;
  Tape::ExprId gate_dist = -1;
  std::vector<DecoderToken> sql_cands;
  Tape::ExprId sql_dist = -1;
  std::vector<DecoderToken> col_cands;
  Tape::ExprId col_dist = -1;
  std::vector<DecoderToken> cell_cands;
  Tape::ExprId cell_dist = -1;

  int gate_position(int channel) const;
  const std::vector<DecoderToken>& cands(int channel) const;
  Tape::ExprId dist(int channel) const;
};

// When all_channels is false, only gold_channel's distribution is built (the
// gate always is). The grammar mask applies only when p.cfg.grammar_mask is
// set; the cell channel's availability rule (a column must precede it)
// applies always.
StepExprs build_step_exprs(Tape& tape, ModelParams& p,
                           const EncodedContext& ctx,
                           const DecodeState& state, bool all_channels,
                           int gold_channel = -1);

// Flattened mixture over all available candidates, in avail order.
Tape::ExprId joint_expr(Tape& tape, const StepExprs& se);

// Value-level view of one step: gate over all three slots (unavailable
// channels hold 0), per-channel distributions, and the joint mixture.
struct StepDistribution {
  Vec gate;
  std::vector<DecoderToken> candidates;
  Vec joint;
  Vec sql;
  Vec column;
  Vec cell;
};

StepDistribution step(Tape& tape, ModelParams& p, const EncodedContext& ctx,
                      const DecodeState& state);

// Spec-level channel views over the full (unmasked) candidate sets.
Vec gate_dist(Tape& tape, ModelParams& p, Tape::ExprId h_dec);
Vec channel_sql(Tape& tape, ModelParams& p, Tape::ExprId h_dec);
Vec channel_column(Tape& tape, ModelParams& p, const EncodedContext& ctx,
                   Tape::ExprId h_dec);
// Throws NumericError when last_column is unset: the cell channel is only
// reachable after a WHERE column.
Vec channel_cell(Tape& tape, ModelParams& p, const EncodedContext& ctx,
                 Tape::ExprId h_dec, int last_column);

struct DecodeResult {
  TokenSeq seq;
  bool truncated = false;
};

// Greedy argmax of the joint at each step; ties break toward the lowest
// candidate index. The tape is reset first and used as scratch.
DecodeResult decode_greedy(Tape& tape, ModelParams& p,
                           const std::vector<std::string>& question,
                           const Table& table);

struct SequenceScore {
  double total = 0.0;
  std::vector<double> gate_terms;   // log p_z(z*_t) per step
  std::vector<double> token_terms;  // log p_w(y_t | z*_t) per step
  Tape::ExprId total_expr = -1;     // scalar expression for backward
};

// Teacher-forced scoring of a well-formed sequence. Builds on the given tape
// without resetting it, so scores for several sequences can share a tape.
// Throws NumericError when a gold token falls outside its channel's support.
SequenceScore sequence_log_prob(Tape& tape, ModelParams& p,
                                const EncodedContext& ctx,
                                const TokenSeq& gold);

struct SampleResult {
  TokenSeq seq;
  bool truncated = false;
  double log_prob = 0.0;
  Tape::ExprId log_prob_expr = -1;
};

// Ancestral sampling: k sequences drawn channel-then-token, which matches
// the joint because channels have disjoint candidate sets. All k share the
// context's encoding on the caller's tape.
std::vector<SampleResult> sample(Tape& tape, ModelParams& p,
                                 const EncodedContext& ctx, Rng& rng, int k);

}  // namespace stamp
