#include "sidlab/mpnn.hpp"

#include <cmath>
#include <string>

#include "sidlab/error.hpp"

namespace sidlab {

namespace {

using ConstMat = Eigen::Map<const RowMatrix>;
using MutMat = Eigen::Map<RowMatrix>;
using ConstVec = Eigen::Map<const Eigen::RowVectorXd>;
using MutVec = Eigen::Map<Eigen::RowVectorXd>;

constexpr double kLayerNormEps = 1e-5;
constexpr double kLogFloor = -27.631021115928547;  // log(1e-12)

ConstMat cmat(std::span<const double> p, std::size_t off, int rows, int cols) {
  return ConstMat(p.data() + off, rows, cols);
}
ConstVec cvec(std::span<const double> p, std::size_t off, int len) { return ConstVec(p.data() + off, len); }
MutMat mmat(std::span<double> p, std::size_t off, int rows, int cols) { return MutMat(p.data() + off, rows, cols); }
MutVec mvec(std::span<double> p, std::size_t off, int len) { return MutVec(p.data() + off, len); }

// Ordered pairs (i, j), i != j, enumerated row by row.
int pair_index(int n, int i, int j) { return i * (n - 1) + (j < i ? j : j - 1); }

void layer_norm_rows(const RowMatrix& in, const ConstVec& gain, const ConstVec& bias, RowMatrix& normalized,
                     Eigen::VectorXd& inv_std, RowMatrix& out) {
  const auto rows = in.rows();
  const auto cols = static_cast<double>(in.cols());
  normalized.resize(rows, in.cols());
  inv_std.resize(rows);
  out.resize(rows, in.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = in.row(r).sum() / cols;
    const double var = (in.row(r).array() - mean).square().sum() / cols;
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std(r) = is;
    normalized.row(r) = (in.row(r).array() - mean) * is;
    out.row(r) = normalized.row(r).cwiseProduct(gain) + bias;
  }
}

// Returns d loss / d input and accumulates the affine parameter gradients.
RowMatrix layer_norm_backward(const RowMatrix& d_out, const RowMatrix& normalized, const Eigen::VectorXd& inv_std,
                              const ConstVec& gain, MutVec d_gain, MutVec d_bias) {
  RowMatrix d_in(d_out.rows(), d_out.cols());
  const double cols = static_cast<double>(d_out.cols());
  for (Eigen::Index r = 0; r < d_out.rows(); ++r) {
    d_gain += d_out.row(r).cwiseProduct(normalized.row(r));
    d_bias += d_out.row(r);
    const Eigen::RowVectorXd d_hat = d_out.row(r).cwiseProduct(gain);
    const double mean_d = d_hat.sum() / cols;
    const double mean_dx = d_hat.dot(normalized.row(r)) / cols;
    d_in.row(r) = inv_std(r) * (d_hat.array() - mean_d - normalized.row(r).array() * mean_dx).matrix();
  }
  return d_in;
}

RowMatrix relu(const RowMatrix& m) { return m.cwiseMax(0.0); }

void add_row_bias(RowMatrix& m, const ConstVec& b) { m.rowwise() += b; }

}  // namespace

void MpnnConfig::validate() const {
  if (layers < 1) throw Error(ErrorKind::kDomain, "MPNN needs at least one layer");
  if (hidden < 4 || hidden % 4 != 0) throw Error(ErrorKind::kDomain, "MPNN hidden width must be divisible by 4");
}

Mpnn::Mpnn(MpnnConfig config, int node_vocab, int edge_vocab, int node_out, int edge_out)
    : config_(config), node_vocab_(node_vocab), edge_vocab_(edge_vocab), node_out_(node_out), edge_out_(edge_out) {
  config_.validate();
  const auto d = static_cast<std::size_t>(config_.hidden);
  const auto de = static_cast<std::size_t>(config_.edge_hidden());
  std::size_t off = 0;
  auto take = [&](std::size_t len) {
    const std::size_t at = off;
    off += len;
    return at;
  };
  in_x_w_ = take(d * static_cast<std::size_t>(node_vocab_ + 1));
  in_x_b_ = take(d);
  in_e_w_ = take(de * static_cast<std::size_t>(edge_vocab_));
  in_e_b_ = take(de);
  for (int l = 0; l < config_.layers; ++l) {
    LayerOffsets lo{};
    lo.w_src = take(de * d);
    lo.w_trg = take(de * d);
    lo.w_edge = take(de * de);
    lo.b_h = take(de);
    lo.fe1_w = take(de * de);
    lo.fe1_b = take(de);
    lo.fe2_w = take(de * de);
    lo.fe2_b = take(de);
    lo.ln_e_g = take(de);
    lo.ln_e_b = take(de);
    lo.fn1_w = take(d * de);
    lo.fn1_b = take(d);
    lo.fn2_w = take(d * d);
    lo.fn2_b = take(d);
    lo.ln_x_g = take(d);
    lo.ln_x_b = take(d);
    layers_.push_back(lo);
  }
  out_x_w_ = take(static_cast<std::size_t>(node_out_) * d);
  out_x_b_ = take(static_cast<std::size_t>(node_out_));
  out_e_w_ = take(static_cast<std::size_t>(edge_out_) * de);
  out_e_b_ = take(static_cast<std::size_t>(edge_out_));
  param_count_ = off;
}

std::vector<double> Mpnn::init_params(RngStream rng, double head_scale) const {
  std::vector<double> p(param_count_, 0.0);
  const int d = config_.hidden;
  const int de = config_.edge_hidden();
  auto glorot = [&](std::size_t off, int rows, int cols, double scale = 1.0) {
    const double bound = scale * std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (std::size_t k = 0; k < static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); ++k) {
      p[off + k] = bound * (2.0 * rng.uniform() - 1.0);
    }
  };
  // Small non-zero biases keep ReLU inputs away from the kink at exactly zero.
  auto bias = [&](std::size_t off, int len) {
    for (int k = 0; k < len; ++k) p[off + static_cast<std::size_t>(k)] = 0.1 * (2.0 * rng.uniform() - 1.0);
  };
  auto ones = [&](std::size_t off, int len) {
    for (int k = 0; k < len; ++k) p[off + static_cast<std::size_t>(k)] = 1.0;
  };
  glorot(in_x_w_, d, node_vocab_ + 1);
  bias(in_x_b_, d);
  glorot(in_e_w_, de, edge_vocab_);
  bias(in_e_b_, de);
  for (const auto& lo : layers_) {
    glorot(lo.w_src, de, d);
    glorot(lo.w_trg, de, d);
    glorot(lo.w_edge, de, de);
    bias(lo.b_h, de);
    glorot(lo.fe1_w, de, de);
    bias(lo.fe1_b, de);
    glorot(lo.fe2_w, de, de);
    bias(lo.fe2_b, de);
    ones(lo.ln_e_g, de);
    glorot(lo.fn1_w, d, de);
    bias(lo.fn1_b, d);
    glorot(lo.fn2_w, d, d);
    bias(lo.fn2_b, d);
    ones(lo.ln_x_g, d);
  }
  glorot(out_x_w_, node_out_, d, head_scale);
  glorot(out_e_w_, edge_out_, de, head_scale);
  return p;
}

Mpnn::Output Mpnn::forward(std::span<const double> params, const GraphInstance& g, double alpha, Tape* tape) const {
  if (params.size() != param_count_) throw Error(ErrorKind::kDimensionMismatch, "MPNN parameter count");
  const int n = g.n();
  const int pairs = n * (n - 1);
  const int d = config_.hidden;
  const int de = config_.edge_hidden();

  RowMatrix x(n, d);
  {
    const ConstMat w = cmat(params, in_x_w_, d, node_vocab_ + 1);
    const ConstVec b = cvec(params, in_x_b_, d);
    for (int i = 0; i < n; ++i) {
      const Label label = g.node(i);
      if (label < 0 || label >= node_vocab_) throw Error(ErrorKind::kDomain, "node label outside MPNN vocabulary");
      x.row(i) = w.col(label).transpose() + alpha * w.col(node_vocab_).transpose() + b;
    }
  }
  RowMatrix e(pairs, de);
  std::vector<Label> pair_labels(static_cast<std::size_t>(pairs));
  {
    const ConstMat w = cmat(params, in_e_w_, de, edge_vocab_);
    const ConstVec b = cvec(params, in_e_b_, de);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const Label label = g.edge(i, j);
        if (label < 0 || label >= edge_vocab_) throw Error(ErrorKind::kDomain, "edge label outside MPNN vocabulary");
        const int p = pair_index(n, i, j);
        pair_labels[static_cast<std::size_t>(p)] = label;
        e.row(p) = w.col(label).transpose() + b;
      }
    }
  }
  if (tape) {
    tape->n = n;
    tape->alpha = alpha;
    tape->nodes.assign(g.nodes().begin(), g.nodes().end());
    tape->edges = pair_labels;
    tape->layers.clear();
    tape->layers.reserve(layers_.size());
  }

  for (const auto& lo : layers_) {
    const RowMatrix src = x * cmat(params, lo.w_src, de, d).transpose();
    const RowMatrix trg = x * cmat(params, lo.w_trg, de, d).transpose();
    RowMatrix a = e * cmat(params, lo.w_edge, de, de).transpose();
    const ConstVec b_h = cvec(params, lo.b_h, de);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        a.row(pair_index(n, i, j)) += src.row(i) + trg.row(j) + b_h;
      }
    }
    RowMatrix h = relu(a);

    RowMatrix f1 = h * cmat(params, lo.fe1_w, de, de).transpose();
    add_row_bias(f1, cvec(params, lo.fe1_b, de));
    f1 = relu(f1);
    RowMatrix fe = f1 * cmat(params, lo.fe2_w, de, de).transpose();
    add_row_bias(fe, cvec(params, lo.fe2_b, de));
    RowMatrix fe_hat, fe_ln;
    Eigen::VectorXd fe_inv_std;
    layer_norm_rows(fe, cvec(params, lo.ln_e_g, de), cvec(params, lo.ln_e_b, de), fe_hat, fe_inv_std, fe_ln);

    RowMatrix g1 = h * cmat(params, lo.fn1_w, d, de).transpose();
    add_row_bias(g1, cvec(params, lo.fn1_b, d));
    g1 = relu(g1);
    RowMatrix fn = g1 * cmat(params, lo.fn2_w, d, d).transpose();
    add_row_bias(fn, cvec(params, lo.fn2_b, d));
    RowMatrix s = x;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i != j) s.row(i) += fn.row(pair_index(n, i, j));
      }
    }
    RowMatrix s_hat, x_next;
    Eigen::VectorXd s_inv_std;
    layer_norm_rows(s, cvec(params, lo.ln_x_g, d), cvec(params, lo.ln_x_b, d), s_hat, s_inv_std, x_next);

    RowMatrix e_next = e + fe_ln;
    if (tape) {
      Tape::Layer rec;
      rec.x = std::move(x);
      rec.e = std::move(e);
      rec.a = std::move(a);
      rec.h = std::move(h);
      rec.f1 = std::move(f1);
      rec.fe_hat = std::move(fe_hat);
      rec.fe_inv_std = std::move(fe_inv_std);
      rec.g1 = std::move(g1);
      rec.s_hat = std::move(s_hat);
      rec.s_inv_std = std::move(s_inv_std);
      tape->layers.push_back(std::move(rec));
    }
    x = std::move(x_next);
    e = std::move(e_next);
  }

  Output out;
  out.node_logits = x * cmat(params, out_x_w_, node_out_, d).transpose();
  add_row_bias(out.node_logits, cvec(params, out_x_b_, node_out_));
  RowMatrix full = e * cmat(params, out_e_w_, edge_out_, de).transpose();
  add_row_bias(full, cvec(params, out_e_b_, edge_out_));
  const int m = n * (n - 1) / 2;
  out.edge_logits.resize(m, edge_out_);
  int u = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j, ++u) {
      out.edge_logits.row(u) = 0.5 * (full.row(pair_index(n, i, j)) + full.row(pair_index(n, j, i)));
    }
  }
  if (tape) {
    tape->x_final = std::move(x);
    tape->e_final = std::move(e);
  }
  return out;
}

void Mpnn::backward(std::span<const double> params, const Tape& tape, const RowMatrix& d_node_logits,
                    const RowMatrix& d_edge_logits, std::span<double> grad) const {
  if (grad.size() != param_count_) throw Error(ErrorKind::kDimensionMismatch, "gradient buffer size");
  const int n = tape.n;
  const int pairs = n * (n - 1);
  const int d = config_.hidden;
  const int de = config_.edge_hidden();

  // Output heads.
  mmat(grad, out_x_w_, node_out_, d) += d_node_logits.transpose() * tape.x_final;
  mvec(grad, out_x_b_, node_out_) += d_node_logits.colwise().sum();
  RowMatrix dx = d_node_logits * cmat(params, out_x_w_, node_out_, d);

  RowMatrix d_full(pairs, edge_out_);
  int u = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j, ++u) {
      d_full.row(pair_index(n, i, j)) = 0.5 * d_edge_logits.row(u);
      d_full.row(pair_index(n, j, i)) = 0.5 * d_edge_logits.row(u);
    }
  }
  mmat(grad, out_e_w_, edge_out_, de) += d_full.transpose() * tape.e_final;
  mvec(grad, out_e_b_, edge_out_) += d_full.colwise().sum();
  RowMatrix de_acc = d_full * cmat(params, out_e_w_, edge_out_, de);

  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& lo = layers_[li];
    const auto& rec = tape.layers[li];

    // x_next = LN(s), s = x + sum_j fn_ij
    const RowMatrix ds = layer_norm_backward(dx, rec.s_hat, rec.s_inv_std, cvec(params, lo.ln_x_g, d),
                                             mvec(grad, lo.ln_x_g, d), mvec(grad, lo.ln_x_b, d));
    // e_next = e + LN(fe)
    RowMatrix dfe = layer_norm_backward(de_acc, rec.fe_hat, rec.fe_inv_std, cvec(params, lo.ln_e_g, de),
                                        mvec(grad, lo.ln_e_g, de), mvec(grad, lo.ln_e_b, de));

    mmat(grad, lo.fe2_w, de, de) += dfe.transpose() * rec.f1;
    mvec(grad, lo.fe2_b, de) += dfe.colwise().sum();
    RowMatrix df1 = (dfe * cmat(params, lo.fe2_w, de, de)).cwiseProduct((rec.f1.array() > 0.0).cast<double>().matrix());
    mmat(grad, lo.fe1_w, de, de) += df1.transpose() * rec.h;
    mvec(grad, lo.fe1_b, de) += df1.colwise().sum();
    RowMatrix dh = df1 * cmat(params, lo.fe1_w, de, de);

    RowMatrix dfn(pairs, d);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i != j) dfn.row(pair_index(n, i, j)) = ds.row(i);
      }
    }
    mmat(grad, lo.fn2_w, d, d) += dfn.transpose() * rec.g1;
    mvec(grad, lo.fn2_b, d) += dfn.colwise().sum();
    RowMatrix dg1 = (dfn * cmat(params, lo.fn2_w, d, d)).cwiseProduct((rec.g1.array() > 0.0).cast<double>().matrix());
    mmat(grad, lo.fn1_w, d, de) += dg1.transpose() * rec.h;
    mvec(grad, lo.fn1_b, d) += dg1.colwise().sum();
    dh += dg1 * cmat(params, lo.fn1_w, d, de);

    const RowMatrix da = dh.cwiseProduct((rec.h.array() > 0.0).cast<double>().matrix());
    mvec(grad, lo.b_h, de) += da.colwise().sum();
    RowMatrix dsrc = RowMatrix::Zero(n, de);
    RowMatrix dtrg = RowMatrix::Zero(n, de);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const int p = pair_index(n, i, j);
        dsrc.row(i) += da.row(p);
        dtrg.row(j) += da.row(p);
      }
    }
    mmat(grad, lo.w_src, de, d) += dsrc.transpose() * rec.x;
    mmat(grad, lo.w_trg, de, d) += dtrg.transpose() * rec.x;
    mmat(grad, lo.w_edge, de, de) += da.transpose() * rec.e;

    RowMatrix dx_in = ds + dsrc * cmat(params, lo.w_src, de, d) + dtrg * cmat(params, lo.w_trg, de, d);
    de_acc += da * cmat(params, lo.w_edge, de, de);
    dx = std::move(dx_in);
  }

  // Input projections.
  MutMat dwx = mmat(grad, in_x_w_, d, node_vocab_ + 1);
  for (int i = 0; i < n; ++i) {
    dwx.col(tape.nodes[static_cast<std::size_t>(i)]) += dx.row(i).transpose();
    dwx.col(node_vocab_) += tape.alpha * dx.row(i).transpose();
  }
  mvec(grad, in_x_b_, d) += dx.colwise().sum();
  MutMat dwe = mmat(grad, in_e_w_, de, edge_vocab_);
  for (int p = 0; p < pairs; ++p) dwe.col(tape.edges[static_cast<std::size_t>(p)]) += de_acc.row(p).transpose();
  mvec(grad, in_e_b_, de) += de_acc.colwise().sum();
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> softmax_row(const Eigen::RowVectorXd& logits) {
  const double mx = logits.maxCoeff();
  std::vector<double> p(static_cast<std::size_t>(logits.size()));
  double s = 0.0;
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    p[static_cast<std::size_t>(k)] = std::exp(logits(k) - mx);
    s += p[static_cast<std::size_t>(k)];
  }
  for (double& v : p) v /= s;
  return p;
}

void check_finite(const Mpnn::Output& out) {
  if (!out.node_logits.allFinite() || !out.edge_logits.allFinite()) {
    throw Error(ErrorKind::kDivergence, "non-finite value in MPNN forward pass");
  }
}

}  // namespace

MpnnDenoiser::MpnnDenoiser(const GraphSchema& input_schema, MpnnConfig config, RngStream init_rng)
    : schema_(input_schema),
      net_(config, input_schema.node_vocab(), input_schema.edge_vocab(), input_schema.d_x, input_schema.d_e),
      params_(net_.init_params(init_rng)) {}

MpnnDenoiser::MpnnDenoiser(const GraphSchema& input_schema, MpnnConfig config, std::vector<double> params)
    : schema_(input_schema),
      net_(config, input_schema.node_vocab(), input_schema.edge_vocab(), input_schema.d_x, input_schema.d_e),
      params_(std::move(params)) {
  if (params_.size() != net_.param_count()) throw Error(ErrorKind::kFormat, "MPNN parameter count mismatch");
}

DenoiserOutput MpnnDenoiser::predict(const GraphInstance& z_t, double alpha_t) const {
  const auto out = net_.forward(params_, z_t, alpha_t);
  check_finite(out);
  DenoiserOutput res;
  res.n = z_t.n();
  for (Eigen::Index i = 0; i < out.node_logits.rows(); ++i) res.node_dists.emplace_back(softmax_row(out.node_logits.row(i)));
  for (Eigen::Index u = 0; u < out.edge_logits.rows(); ++u) res.edge_dists.emplace_back(softmax_row(out.edge_logits.row(u)));
  return res;
}

double MpnnDenoiser::accumulate_gradient(const TrainingExample& ex, std::span<double> grad) const {
  const double gamma = ex.gamma < 0.0 ? default_gamma(ex.g1) : ex.gamma;
  Mpnn::Tape tape;
  const auto out = net_.forward(params_, ex.z_t, ex.alpha_t, &tape);
  check_finite(out);
  double loss = 0.0;
  auto head = [&](const RowMatrix& logits, std::size_t slot_offset, double w) {
    RowMatrix d = RowMatrix::Zero(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
      const auto p = softmax_row(logits.row(r));
      const auto target = static_cast<std::size_t>(ex.g1.slot(slot_offset + static_cast<std::size_t>(r)));
      const double lp = std::log(p[target]);
      if (lp <= kLogFloor) {
        loss -= w * kLogFloor;
        continue;
      }
      loss -= w * lp;
      for (Eigen::Index k = 0; k < logits.cols(); ++k) {
        d(r, k) = w * (p[static_cast<std::size_t>(k)] - (static_cast<std::size_t>(k) == target ? 1.0 : 0.0));
      }
    }
    return d;
  };
  const RowMatrix d_node = head(out.node_logits, 0, gamma);
  const RowMatrix d_edge = head(out.edge_logits, static_cast<std::size_t>(ex.g1.n()), 1.0 - gamma);
  net_.backward(params_, tape, d_node, d_edge, grad);
  return loss;
}

}  // namespace sidlab
