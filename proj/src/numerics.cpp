// SPDX-License-Identifier: Apache-2.0
#include "stamp/numerics.hpp"

#include <algorithm>
#include <cmath>

#include "stamp/common.hpp"

namespace stamp {

namespace {
constexpr double kLogFloor = 1e-12;
}

GruParams::GruParams(const std::string& prefix, int d_in, int h)
    : wz(prefix + ".wz", h, d_in),
      uz(prefix + ".uz", h, h),
      bz(prefix + ".bz", 1, h),
      wr(prefix + ".wr", h, d_in),
      ur(prefix + ".ur", h, h),
      br(prefix + ".br", 1, h),
      wh(prefix + ".wh", h, d_in),
      uh(prefix + ".uh", h, h),
      bh(prefix + ".bh", 1, h) {}

void GruParams::collect(std::vector<Param*>& out) {
  for (Param* p : {&wz, &uz, &bz, &wr, &ur, &br, &wh, &uh, &bh})
    out.push_back(p);
}

Vec matvec(const Mat& w, const Vec& x) {
  if (w.cols != static_cast<int>(x.size()))
    throw NumericError("matvec: " + std::to_string(w.rows) + "x" +
                       std::to_string(w.cols) + " applied to vector of size " +
                       std::to_string(x.size()));
  Vec y(w.rows, 0.0);
  for (int r = 0; r < w.rows; ++r) {
    const double* row = w.data.data() + static_cast<size_t>(r) * w.cols;
    double acc = 0.0;
    for (int c = 0; c < w.cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

Vec softmax(const Vec& v) {
  if (v.empty()) throw NumericError("softmax: empty vector");
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  Vec out(v.size());
  double sum = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

double cross_entropy(const Vec& dist, int gold_index) {
  if (gold_index < 0 || gold_index >= static_cast<int>(dist.size()))
    throw NumericError("cross_entropy: gold index " +
                       std::to_string(gold_index) + " out of range " +
                       std::to_string(dist.size()));
  return -std::log(std::max(dist[gold_index], kLogFloor));
}

double attn_score(const Vec& h_dec, const Vec& h_tok, const Mat& w) {
  if (w.rows != 1 || w.cols != static_cast<int>(h_dec.size() + h_tok.size()))
    throw NumericError("attn_score: weight shape mismatch");
  double acc = 0.0;
  size_t k = 0;
  for (double x : h_dec) acc += w.data[k++] * x;
  for (double x : h_tok) acc += w.data[k++] * x;
  return acc;
}

Vec gru_step(const Vec& x, const Vec& h_prev, const GruParams& p) {
  const int h = p.hidden_size();
  if (static_cast<int>(x.size()) != p.input_size() ||
      static_cast<int>(h_prev.size()) != h)
    throw NumericError("gru_step: dimension mismatch");
  Vec z = matvec(p.wz.w, x);
  Vec r = matvec(p.wr.w, x);
  {
    Vec zh = matvec(p.uz.w, h_prev);
    Vec rh = matvec(p.ur.w, h_prev);
    for (int i = 0; i < h; ++i) {
      z[i] = 1.0 / (1.0 + std::exp(-(z[i] + zh[i] + p.bz.w.data[i])));
      r[i] = 1.0 / (1.0 + std::exp(-(r[i] + rh[i] + p.br.w.data[i])));
    }
  }
  Vec rh_prev(h);
  for (int i = 0; i < h; ++i) rh_prev[i] = r[i] * h_prev[i];
  Vec cand = matvec(p.wh.w, x);
  Vec ch = matvec(p.uh.w, rh_prev);
  Vec out(h);
  for (int i = 0; i < h; ++i) {
    double ht = std::tanh(cand[i] + ch[i] + p.bh.w.data[i]);
    out[i] = (1.0 - z[i]) * h_prev[i] + z[i] * ht;
  }
  return out;
}

void sgd_step(const std::vector<Param*>& params, double lr) {
  if (!(lr > 0.0)) throw NumericError("sgd_step: lr must be positive");
  for (const Param* p : params)
    for (double g : p->g.data)
      if (!std::isfinite(g))
        throw NumericError("sgd_step: non-finite gradient in tensor " +
                           p->name);
  for (Param* p : params) {
    for (size_t i = 0; i < p->w.data.size(); ++i)
      p->w.data[i] -= lr * p->g.data[i];
    p->zero_grad();
  }
}

void clamp_param(Param& p, double range) {
  for (double& x : p.w.data) x = std::clamp(x, -range, range);
}

Tape::ExprId Tape::push(Op op, int len) {
  if (len <= 0) throw NumericError("tape: empty expression");
  Node n;
  n.op = op;
  n.len = len;
  n.off = static_cast<int32_t>(buf_.size());
  buf_.resize(buf_.size() + static_cast<size_t>(len), 0.0);
  nodes_.push_back(n);
  return static_cast<ExprId>(nodes_.size() - 1);
}

void Tape::check_id(ExprId id) const {
  if (id < 0 || id >= static_cast<ExprId>(nodes_.size()))
    throw NumericError("tape: bad expression id");
}

int Tape::length(ExprId id) const {
  check_id(id);
  return nodes_[id].len;
}

const double* Tape::values(ExprId id) const {
  check_id(id);
  return val(id);
}

Vec Tape::value_vec(ExprId id) const {
  check_id(id);
  return Vec(val(id), val(id) + nodes_[id].len);
}

double Tape::scalar(ExprId id) const {
  check_id(id);
  if (nodes_[id].len != 1) throw NumericError("tape: scalar() on a vector");
  return val(id)[0];
}

Tape::ExprId Tape::constant(const Vec& v) {
  ExprId id = push(Op::kConstant, static_cast<int>(v.size()));
  std::copy(v.begin(), v.end(), val(id));
  return id;
}

Tape::ExprId Tape::zeros(int n) { return push(Op::kConstant, n); }

Tape::ExprId Tape::param_row(Param& p, int row) {
  if (row < 0 || row >= p.w.rows)
    throw NumericError("tape: param_row out of range for " + p.name);
  ExprId id = push(Op::kParamRow, p.w.cols);
  nodes_[id].param = &p;
  nodes_[id].aux = row;
  const double* src = p.w.data.data() + static_cast<size_t>(row) * p.w.cols;
  std::copy(src, src + p.w.cols, val(id));
  return id;
}

Tape::ExprId Tape::param_mean_rows(Param& p, const std::vector<int>& rows) {
  if (rows.empty()) throw NumericError("tape: param_mean_rows with no rows");
  for (int r : rows)
    if (r < 0 || r >= p.w.rows)
      throw NumericError("tape: param_mean_rows out of range for " + p.name);
  ExprId id = push(Op::kParamMeanRows, p.w.cols);
  nodes_[id].param = &p;
  nodes_[id].args = static_cast<int32_t>(args_.size());
  nodes_[id].n_args = static_cast<int32_t>(rows.size());
  for (int r : rows) args_.push_back(r);
  double inv = 1.0 / static_cast<double>(rows.size());
  double* out = val(id);
  for (int r : rows) {
    const double* src = p.w.data.data() + static_cast<size_t>(r) * p.w.cols;
    for (int c = 0; c < p.w.cols; ++c) out[c] += src[c];
  }
  for (int c = 0; c < p.w.cols; ++c) out[c] *= inv;
  return id;
}

Tape::ExprId Tape::matvec(Param& w, ExprId x) {
  check_id(x);
  if (w.w.cols != nodes_[x].len)
    throw NumericError("tape: matvec shape mismatch for " + w.name);
  ExprId id = push(Op::kMatVec, w.w.rows);
  nodes_[id].param = &w;
  nodes_[id].a = x;
  const double* xv = val(x);
  double* out = val(id);
  for (int r = 0; r < w.w.rows; ++r) {
    const double* row = w.w.data.data() + static_cast<size_t>(r) * w.w.cols;
    double acc = 0.0;
    for (int c = 0; c < w.w.cols; ++c) acc += row[c] * xv[c];
    out[r] = acc;
  }
  return id;
}

Tape::ExprId Tape::add(ExprId a, ExprId b) {
  check_id(a);
  check_id(b);
  if (nodes_[a].len != nodes_[b].len)
    throw NumericError("tape: add length mismatch");
  ExprId id = push(Op::kAdd, nodes_[a].len);
  nodes_[id].a = a;
  nodes_[id].b = b;
  const double* av = val(a);
  const double* bv = val(b);
  double* out = val(id);
  for (int i = 0; i < nodes_[id].len; ++i) out[i] = av[i] + bv[i];
  return id;
}

Tape::ExprId Tape::mul(ExprId a, ExprId b) {
  check_id(a);
  check_id(b);
  if (nodes_[a].len != nodes_[b].len)
    throw NumericError("tape: mul length mismatch");
  ExprId id = push(Op::kMul, nodes_[a].len);
  nodes_[id].a = a;
  nodes_[id].b = b;
  const double* av = val(a);
  const double* bv = val(b);
  double* out = val(id);
  for (int i = 0; i < nodes_[id].len; ++i) out[i] = av[i] * bv[i];
  return id;
}

Tape::ExprId Tape::scale(ExprId a, double s) {
  check_id(a);
  ExprId id = push(Op::kScale, nodes_[a].len);
  nodes_[id].a = a;
  nodes_[id].factor = s;
  const double* av = val(a);
  double* out = val(id);
  for (int i = 0; i < nodes_[id].len; ++i) out[i] = s * av[i];
  return id;
}

Tape::ExprId Tape::gru_combine(ExprId z, ExprId h_prev, ExprId h_tilde) {
  check_id(z);
  check_id(h_prev);
  check_id(h_tilde);
  int len = nodes_[z].len;
  if (nodes_[h_prev].len != len || nodes_[h_tilde].len != len)
    throw NumericError("tape: gru_combine length mismatch");
  ExprId id = push(Op::kGruCombine, len);
  nodes_[id].a = z;
  nodes_[id].b = h_prev;
  nodes_[id].c = h_tilde;
  const double* zv = val(z);
  const double* hv = val(h_prev);
  const double* tv = val(h_tilde);
  double* out = val(id);
  for (int i = 0; i < len; ++i)
    out[i] = (1.0 - zv[i]) * hv[i] + zv[i] * tv[i];
  return id;
}

Tape::ExprId Tape::sigmoid(ExprId a) {
  check_id(a);
  ExprId id = push(Op::kSigmoid, nodes_[a].len);
  nodes_[id].a = a;
  const double* av = val(a);
  double* out = val(id);
  for (int i = 0; i < nodes_[id].len; ++i)
    out[i] = 1.0 / (1.0 + std::exp(-av[i]));
  return id;
}

Tape::ExprId Tape::tanh(ExprId a) {
  check_id(a);
  ExprId id = push(Op::kTanh, nodes_[a].len);
  nodes_[id].a = a;
  const double* av = val(a);
  double* out = val(id);
  for (int i = 0; i < nodes_[id].len; ++i) out[i] = std::tanh(av[i]);
  return id;
}

Tape::ExprId Tape::concat(const std::vector<ExprId>& parts) {
  if (parts.empty()) throw NumericError("tape: concat of nothing");
  int total = 0;
  for (ExprId p : parts) {
    check_id(p);
    total += nodes_[p].len;
  }
  ExprId id = push(Op::kConcat, total);
  nodes_[id].args = static_cast<int32_t>(args_.size());
  nodes_[id].n_args = static_cast<int32_t>(parts.size());
  for (ExprId p : parts) args_.push_back(p);
  double* out = val(id);
  for (ExprId p : parts) {
    const double* pv = val(p);
    out = std::copy(pv, pv + nodes_[p].len, out);
  }
  return id;
}

Tape::ExprId Tape::softmax(ExprId a) {
  check_id(a);
  int len = nodes_[a].len;
  ExprId id = push(Op::kSoftmax, len);
  nodes_[id].a = a;
  const double* av = val(a);
  double* out = val(id);
  double mx = av[0];
  for (int i = 1; i < len; ++i) mx = std::max(mx, av[i]);
  double sum = 0.0;
  for (int i = 0; i < len; ++i) {
    out[i] = std::exp(av[i] - mx);
    sum += out[i];
  }
  for (int i = 0; i < len; ++i) out[i] /= sum;
  return id;
}

Tape::ExprId Tape::gather(ExprId a, const std::vector<int>& indices) {
  check_id(a);
  if (indices.empty()) throw NumericError("tape: gather with no indices");
  for (int i : indices)
    if (i < 0 || i >= nodes_[a].len)
      throw NumericError("tape: gather index out of range");
  ExprId id = push(Op::kGather, static_cast<int>(indices.size()));
  nodes_[id].a = a;
  nodes_[id].args = static_cast<int32_t>(args_.size());
  nodes_[id].n_args = static_cast<int32_t>(indices.size());
  for (int i : indices) args_.push_back(i);
  const double* av = val(a);
  double* out = val(id);
  for (size_t k = 0; k < indices.size(); ++k) out[k] = av[indices[k]];
  return id;
}

Tape::ExprId Tape::weighted_sum(ExprId weights,
                                const std::vector<ExprId>& vs) {
  check_id(weights);
  if (vs.empty()) throw NumericError("tape: weighted_sum of nothing");
  if (nodes_[weights].len != static_cast<int>(vs.size()))
    throw NumericError("tape: weighted_sum weight count mismatch");
  int len = nodes_[vs[0]].len;
  for (ExprId v : vs) {
    check_id(v);
    if (nodes_[v].len != len)
      throw NumericError("tape: weighted_sum length mismatch");
  }
  ExprId id = push(Op::kWeightedSum, len);
  nodes_[id].a = weights;
  nodes_[id].args = static_cast<int32_t>(args_.size());
  nodes_[id].n_args = static_cast<int32_t>(vs.size());
  for (ExprId v : vs) args_.push_back(v);
  const double* wv = val(weights);
  double* out = val(id);
  for (size_t k = 0; k < vs.size(); ++k) {
    const double* vv = val(vs[k]);
    for (int i = 0; i < len; ++i) out[i] += wv[k] * vv[i];
  }
  return id;
}

Tape::ExprId Tape::mul_sv(ExprId scalar, ExprId v) {
  check_id(scalar);
  check_id(v);
  if (nodes_[scalar].len != 1)
    throw NumericError("tape: mul_sv scalar must have length 1");
  ExprId id = push(Op::kMulSV, nodes_[v].len);
  nodes_[id].a = scalar;
  nodes_[id].b = v;
  double s = val(scalar)[0];
  const double* vv = val(v);
  double* out = val(id);
  for (int i = 0; i < nodes_[id].len; ++i) out[i] = s * vv[i];
  return id;
}

Tape::ExprId Tape::pick(ExprId a, int index) {
  check_id(a);
  if (index < 0 || index >= nodes_[a].len)
    throw NumericError("tape: pick index out of range");
  ExprId id = push(Op::kPick, 1);
  nodes_[id].a = a;
  nodes_[id].aux = index;
  val(id)[0] = val(a)[index];
  return id;
}

Tape::ExprId Tape::log(ExprId a) {
  check_id(a);
  ExprId id = push(Op::kLog, nodes_[a].len);
  nodes_[id].a = a;
  const double* av = val(a);
  double* out = val(id);
  for (int i = 0; i < nodes_[id].len; ++i)
    out[i] = std::log(std::max(av[i], kLogFloor));
  return id;
}

Tape::ExprId Tape::sum_list(const std::vector<ExprId>& terms) {
  if (terms.empty()) throw NumericError("tape: sum_list of nothing");
  int len = nodes_[terms[0]].len;
  for (ExprId t : terms) {
    check_id(t);
    if (nodes_[t].len != len)
      throw NumericError("tape: sum_list length mismatch");
  }
  ExprId id = push(Op::kSumList, len);
  nodes_[id].args = static_cast<int32_t>(args_.size());
  nodes_[id].n_args = static_cast<int32_t>(terms.size());
  for (ExprId t : terms) args_.push_back(t);
  double* out = val(id);
  for (ExprId t : terms) {
    const double* tv = val(t);
    for (int i = 0; i < len; ++i) out[i] += tv[i];
  }
  return id;
}

void Tape::backward(ExprId loss) {
  check_id(loss);
  if (nodes_[loss].len != 1)
    throw NumericError("tape: backward target must be a scalar");
  gbuf_.assign(buf_.size(), 0.0);
  gbuf_[nodes_[loss].off] = 1.0;

  for (int32_t id = loss; id >= 0; --id) {
    const Node& n = nodes_[id];
    const double* dy = gbuf_.data() + n.off;
    switch (n.op) {
      case Op::kConstant:
        break;
      case Op::kParamRow: {
        double* dst =
            n.param->g.data.data() + static_cast<size_t>(n.aux) * n.len;
        for (int i = 0; i < n.len; ++i) dst[i] += dy[i];
        break;
      }
      case Op::kParamMeanRows: {
        double inv = 1.0 / static_cast<double>(n.n_args);
        for (int32_t k = 0; k < n.n_args; ++k) {
          int row = args_[n.args + k];
          double* dst =
              n.param->g.data.data() + static_cast<size_t>(row) * n.len;
          for (int i = 0; i < n.len; ++i) dst[i] += inv * dy[i];
        }
        break;
      }
      case Op::kMatVec: {
        const Mat& w = n.param->w;
        Mat& g = n.param->g;
        const double* xv = val(n.a);
        double* dx = grad(n.a);
        for (int r = 0; r < w.rows; ++r) {
          double d = dy[r];
          if (d == 0.0) continue;
          const double* wrow = w.data.data() + static_cast<size_t>(r) * w.cols;
          double* grow = g.data.data() + static_cast<size_t>(r) * w.cols;
          for (int c = 0; c < w.cols; ++c) {
            grow[c] += d * xv[c];
            dx[c] += d * wrow[c];
          }
        }
        break;
      }
      case Op::kAdd: {
        double* da = grad(n.a);
        double* db = grad(n.b);
        for (int i = 0; i < n.len; ++i) {
          da[i] += dy[i];
          db[i] += dy[i];
        }
        break;
      }
      case Op::kMul: {
        const double* av = val(n.a);
        const double* bv = val(n.b);
        double* da = grad(n.a);
        double* db = grad(n.b);
        for (int i = 0; i < n.len; ++i) {
          da[i] += dy[i] * bv[i];
          db[i] += dy[i] * av[i];
        }
        break;
      }
      case Op::kScale: {
        double* da = grad(n.a);
        for (int i = 0; i < n.len; ++i) da[i] += n.factor * dy[i];
        break;
      }
      case Op::kGruCombine: {
        const double* zv = val(n.a);
        const double* hv = val(n.b);
        const double* tv = val(n.c);
        double* dz = grad(n.a);
        double* dh = grad(n.b);
        double* dt = grad(n.c);
        for (int i = 0; i < n.len; ++i) {
          dz[i] += dy[i] * (tv[i] - hv[i]);
          dh[i] += dy[i] * (1.0 - zv[i]);
          dt[i] += dy[i] * zv[i];
        }
        break;
      }
      case Op::kSigmoid: {
        const double* yv = val(id);
        double* da = grad(n.a);
        for (int i = 0; i < n.len; ++i)
          da[i] += dy[i] * yv[i] * (1.0 - yv[i]);
        break;
      }
      case Op::kTanh: {
        const double* yv = val(id);
        double* da = grad(n.a);
        for (int i = 0; i < n.len; ++i)
          da[i] += dy[i] * (1.0 - yv[i] * yv[i]);
        break;
      }
      case Op::kConcat: {
        int off = 0;
        for (int32_t k = 0; k < n.n_args; ++k) {
          int32_t part = args_[n.args + k];
          double* dp = grad(part);
          int plen = nodes_[part].len;
          for (int i = 0; i < plen; ++i) dp[i] += dy[off + i];
          off += plen;
        }
        break;
      }
      case Op::kSoftmax: {
        const double* yv = val(id);
        double* da = grad(n.a);
        double dot = 0.0;
        for (int i = 0; i < n.len; ++i) dot += dy[i] * yv[i];
        for (int i = 0; i < n.len; ++i)
          da[i] += yv[i] * (dy[i] - dot);
        break;
      }
      case Op::kGather: {
        double* da = grad(n.a);
        for (int32_t k = 0; k < n.n_args; ++k)
          da[args_[n.args + k]] += dy[k];
        break;
      }
      case Op::kWeightedSum: {
        const double* wv = val(n.a);
        double* dw = grad(n.a);
        for (int32_t k = 0; k < n.n_args; ++k) {
          int32_t v = args_[n.args + k];
          const double* vv = val(v);
          double* dv = grad(v);
          double acc = 0.0;
          for (int i = 0; i < n.len; ++i) {
            acc += dy[i] * vv[i];
            dv[i] += wv[k] * dy[i];
          }
          dw[k] += acc;
        }
        break;
      }
      case Op::kMulSV: {
        double s = val(n.a)[0];
        const double* vv = val(n.b);
        double* ds = grad(n.a);
        double* dv = grad(n.b);
        double acc = 0.0;
        for (int i = 0; i < n.len; ++i) {
          acc += dy[i] * vv[i];
          dv[i] += s * dy[i];
        }
        ds[0] += acc;
        break;
      }
      case Op::kPick: {
        grad(n.a)[n.aux] += dy[0];
        break;
      }
      case Op::kLog: {
        const double* av = val(n.a);
        double* da = grad(n.a);
        for (int i = 0; i < n.len; ++i)
          if (av[i] > kLogFloor) da[i] += dy[i] / av[i];
        break;
      }
      case Op::kSumList: {
        for (int32_t k = 0; k < n.n_args; ++k) {
          double* dt = grad(args_[n.args + k]);
          for (int i = 0; i < n.len; ++i) dt[i] += dy[i];
        }
        break;
      }
    }
  }
}

void Tape::reset() {
  nodes_.clear();
  buf_.clear();
  gbuf_.clear();
  args_.clear();
}

Tape::ExprId gru_expr(Tape& tape, GruParams& p, Tape::ExprId x,
                      Tape::ExprId h_prev) {
  if (tape.length(x) != p.input_size() ||
      tape.length(h_prev) != p.hidden_size())
    throw NumericError("gru_expr: dimension mismatch");
  auto z = tape.sigmoid(tape.add(
      tape.add(tape.matvec(p.wz, x), tape.matvec(p.uz, h_prev)),
      tape.param_row(p.bz, 0)));
  auto r = tape.sigmoid(tape.add(
      tape.add(tape.matvec(p.wr, x), tape.matvec(p.ur, h_prev)),
      tape.param_row(p.br, 0)));
  auto h_tilde = tape.tanh(tape.add(
      tape.add(tape.matvec(p.wh, x), tape.matvec(p.uh, tape.mul(r, h_prev))),
      tape.param_row(p.bh, 0)));
  return tape.gru_combine(z, h_prev, h_tilde);
}

GradCheckReport grad_check(const std::function<double(bool with_grad)>& loss_fn,
                           const std::vector<Param*>& params, double epsilon,
                           double tol) {
  for (Param* p : params) p->zero_grad();
  loss_fn(true);
  std::vector<Vec> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->g.data);

  GradCheckReport report;
  for (size_t t = 0; t < params.size(); ++t) {
    Param& p = *params[t];
    for (size_t i = 0; i < p.w.data.size(); ++i) {
      double saved = p.w.data[i];
      p.w.data[i] = saved + epsilon;
      double up = loss_fn(false);
      p.w.data[i] = saved - epsilon;
      double down = loss_fn(false);
      p.w.data[i] = saved;
      double cd = (up - down) / (2.0 * epsilon);
      double a = analytic[t][i];
      double rel = std::fabs(a - cd) /
                   std::max({1.0, std::fabs(a), std::fabs(cd)});
      if (rel > report.worst_rel) {
        report.worst_rel = rel;
        report.tensor = p.name;
        report.row = static_cast<int>(i) / p.w.cols;
        report.col = static_cast<int>(i) % p.w.cols;
        report.analytic = a;
        report.numeric = cd;
      }
    }
  }
  report.ok = report.worst_rel <= tol;
  for (Param* p : params) p->zero_grad();
  return report;
}

}  // namespace stamp
