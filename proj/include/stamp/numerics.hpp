// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace stamp {

using Vec = std::vector<double>;

// Dense row-major matrix. A 1 x n Mat doubles as a bias or score row.
struct Mat {
  int rows = 0;
  int cols = 0;
  Vec data;

  Mat() = default;
  Mat(int r, int c)
      : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const {
    return data[static_cast<size_t>(r) * cols + c];
  }
};

// A named parameter tensor with its gradient accumulator. Gradients are
// summed across backward passes and zeroed by sgd_step.
struct Param {
  std::string name;
  Mat w;
  Mat g;

  Param() = default;
  Param(std::string n, int rows, int cols)
      : name(std::move(n)), w(rows, cols), g(rows, cols) {}

  void zero_grad() { std::fill(g.data.begin(), g.data.end(), 0.0); }
};

// Gate weights for one GRU cell. Biases are stored as 1 x H rows.
struct GruParams {
  Param wz, uz, bz;
  Param wr, ur, br;
  Param wh, uh, bh;

  GruParams() = default;
  GruParams(const std::string& prefix, int d_in, int h);

  int input_size() const { return wz.w.cols; }
  int hidden_size() const { return wz.w.rows; }
  void collect(std::vector<Param*>& out);
};

Vec matvec(const Mat& w, const Vec& x);
Vec softmax(const Vec& v);
double cross_entropy(const Vec& dist, int gold_index);
double attn_score(const Vec& h_dec, const Vec& h_tok, const Mat& w);
Vec gru_step(const Vec& x, const Vec& h_prev, const GruParams& p);

// p <- p - lr * g for every tensor, then gradients are zeroed. A non-finite
// gradient entry aborts the whole step (no tensor is touched) and throws
// NumericError naming the offending tensor.
void sgd_step(const std::vector<Param*>& params, double lr);

// Clamps every weight entry to [-range, +range]; gradients untouched.
void clamp_param(Param& p, double range);

// Reverse-mode tape over the fixed set of operations the model needs.
// Expressions are vectors; scalars are length-1 vectors. The tape is reused
// across examples via reset(), which keeps slab capacity.
class Tape {
 public:
  using ExprId = int32_t;

  ExprId constant(const Vec& v);
  ExprId zeros(int n);
  ExprId param_row(Param& p, int row);
  ExprId param_mean_rows(Param& p, const std::vector<int>& rows);
  ExprId matvec(Param& w, ExprId x);
  ExprId add(ExprId a, ExprId b);
  ExprId mul(ExprId a, ExprId b);
  ExprId scale(ExprId a, double s);
  // (1 - z) * h_prev + z * h_tilde, elementwise.
  ExprId gru_combine(ExprId z, ExprId h_prev, ExprId h_tilde);
  ExprId sigmoid(ExprId a);
  ExprId tanh(ExprId a);
  ExprId concat(const std::vector<ExprId>& parts);
  ExprId softmax(ExprId a);
  ExprId gather(ExprId a, const std::vector<int>& indices);
  // weights has one entry per vector in vs; all vs share a length.
  ExprId weighted_sum(ExprId weights, const std::vector<ExprId>& vs);
  // scalar * vector, both differentiable.
  ExprId mul_sv(ExprId scalar, ExprId v);
  ExprId pick(ExprId a, int index);
  // ln(max(x, 1e-12)) elementwise; gradient is 0 on floored entries.
  ExprId log(ExprId a);
  ExprId sum_list(const std::vector<ExprId>& terms);

  int length(ExprId id) const;
  const double* values(ExprId id) const;
  Vec value_vec(ExprId id) const;
  double scalar(ExprId id) const;

  // Accumulates d(loss)/d(param) into every referenced Param's g. loss must
  // be a scalar expression. May be called once per forward build.
  void backward(ExprId loss);

  void reset();
  size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : uint8_t {
    kConstant,
    kParamRow,
    kParamMeanRows,
    kMatVec,
    kAdd,
    kMul,
    kScale,
    kGruCombine,
    kSigmoid,
    kTanh,
    kConcat,
    kSoftmax,
    kGather,
    kWeightedSum,
    kMulSV,
    kPick,
    kLog,
    kSumList,
  };

  struct Node {
    Op op;
    int32_t len;
    int32_t off;      // value offset into buf_
    int32_t a = -1;   // first input
    int32_t b = -1;   // second input
    int32_t c = -1;   // third input
    int32_t args = -1;      // offset into args_ for n-ary inputs / indices
    int32_t n_args = 0;
    Param* param = nullptr;
    int32_t aux = 0;        // row / pick index
    double factor = 0.0;    // scale factor
  };

  ExprId push(Op op, int len);
  double* val(int32_t id) { return buf_.data() + nodes_[id].off; }
  const double* val(int32_t id) const { return buf_.data() + nodes_[id].off; }
  double* grad(int32_t id) { return gbuf_.data() + nodes_[id].off; }
  void check_id(ExprId id) const;

  std::vector<Node> nodes_;
  std::vector<double> buf_;
  std::vector<double> gbuf_;
  std::vector<int32_t> args_;
};

// Builds one GRU step on the tape from primitive ops; matches gru_step.
Tape::ExprId gru_expr(Tape& tape, GruParams& p, Tape::ExprId x,
                      Tape::ExprId h_prev);

struct GradCheckReport {
  bool ok = true;
  double worst_rel = 0.0;
  std::string tensor;
  int row = -1;
  int col = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

// loss_fn(true) must rebuild the computation, run backward, and return the
// loss; loss_fn(false) must return the loss value only. Every coordinate of
// every listed tensor is perturbed with central differences.
GradCheckReport grad_check(const std::function<double(bool with_grad)>& loss_fn,
                           const std::vector<Param*>& params, double epsilon,
                           double tol);

}  // namespace stamp

