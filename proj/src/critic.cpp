#include "sidlab/critic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sidlab/error.hpp"

namespace sidlab {

namespace {

constexpr double kMaxTableCells = 5e6;
constexpr double kResidualCap = 50.0;

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// Summed BCE of labels a under logits z, with d/dz = sigmoid(z) - a written to dz.
double bce(std::span<const double> z, const CorruptionMask& labels, std::vector<double>& dz) {
  dz.resize(z.size());
  double loss = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double a = labels.slot(k) ? 1.0 : 0.0;
    loss += softplus(z[k]) - a * z[k];
    dz[k] = sigmoid(z[k]) - a;
  }
  return loss;
}

void require_mask(const NoiseSpec& spec) {
  if (spec.kind != NoiseKind::kMask) throw Error(ErrorKind::kDomain, "the critic pipeline needs mask noise");
}

}  // namespace

CriticKind parse_critic_kind(std::string_view name) {
  if (name == "zero") return CriticKind::kZero;
  if (name == "tabular") return CriticKind::kTabular;
  if (name == "mpnn") return CriticKind::kMpnn;
  throw Error(ErrorKind::kConfigParse, "unknown critic kind '" + std::string(name) + "'");
}

std::string_view to_string(CriticKind kind) {
  switch (kind) {
    case CriticKind::kZero: return "zero";
    case CriticKind::kTabular: return "tabular";
    case CriticKind::kMpnn: return "mpnn";
  }
  return "zero";
}

double clamp_alpha(double alpha) { return std::clamp(alpha, kAlphaClamp, 1.0 - kAlphaClamp); }

double keep_probability(double residual, double alpha) {
  const double a = clamp_alpha(alpha);
  // sigmoid(logit(a)) can be off by an ulp; a zero residual returns the schedule exactly.
  if (residual == 0.0) return a;
  return sigmoid(residual + logit(a));
}

std::vector<double> ZeroCritic::residual(const GraphInstance& z_hat, double /*alpha*/) const {
  return std::vector<double>(z_hat.slot_count(), 0.0);
}

// ---------------------------------------------------------------------------

TabularCritic::TabularCritic(const GraphSchema& schema, int n, std::vector<double> alpha_grid)
    : schema_(schema.with_mask(false)), n_(n), alpha_grid_(std::move(alpha_grid)) {
  schema_.validate();
  if (n_ < 1) throw Error(ErrorKind::kDomain, "tabular critic needs n >= 1");
  if (alpha_grid_.empty()) throw Error(ErrorKind::kDomain, "tabular critic needs an alpha grid");
  std::sort(alpha_grid_.begin(), alpha_grid_.end());
  const std::size_t m = static_cast<std::size_t>(n_) * static_cast<std::size_t>(n_ - 1) / 2;
  slots_ = static_cast<std::size_t>(n_) + m;
  const double states = std::pow(schema_.d_x, n_) * std::pow(schema_.d_e, static_cast<double>(m));
  if (states * static_cast<double>(slots_ * alpha_grid_.size()) > kMaxTableCells) {
    throw Error(ErrorKind::kStateSpaceTooLarge, "tabular critic table too large");
  }
  state_count_ = static_cast<std::size_t>(states);
  params_.assign(state_count_ * slots_ * alpha_grid_.size(), 0.0);
}

TabularCritic::TabularCritic(const GraphSchema& schema, int n, std::vector<double> alpha_grid,
                             std::vector<double> params)
    : TabularCritic(schema, n, std::move(alpha_grid)) {
  if (params.size() != params_.size()) throw Error(ErrorKind::kFormat, "tabular critic parameter count mismatch");
  params_ = std::move(params);
}

std::size_t TabularCritic::state_index(const GraphInstance& g) const {
  if (g.n() != n_) throw Error(ErrorKind::kDimensionMismatch, "tabular critic built for another graph size");
  std::size_t idx = 0;
  for (std::size_t k = 0; k < g.slot_count(); ++k) {
    const int radix = g.is_node_slot(k) ? schema_.d_x : schema_.d_e;
    const Label v = g.slot(k);
    if (v < 0 || v >= radix) throw Error(ErrorKind::kMaskLabelPresent, "critic inputs must be clean");
    idx = idx * static_cast<std::size_t>(radix) + static_cast<std::size_t>(v);
  }
  return idx;
}

std::size_t TabularCritic::alpha_bucket(double alpha) const {
  std::size_t best = 0;
  for (std::size_t b = 1; b < alpha_grid_.size(); ++b) {
    if (std::abs(alpha_grid_[b] - alpha) < std::abs(alpha_grid_[best] - alpha)) best = b;
  }
  return best;
}

std::size_t TabularCritic::cell(std::size_t state, std::size_t slot, std::size_t bucket) const {
  return (state * slots_ + slot) * alpha_grid_.size() + bucket;
}

std::vector<double> TabularCritic::residual(const GraphInstance& z_hat, double alpha) const {
  const std::size_t state = state_index(z_hat);
  const std::size_t bucket = alpha_bucket(alpha);
  std::vector<double> f(slots_);
  for (std::size_t k = 0; k < slots_; ++k) f[k] = params_[cell(state, k, bucket)];
  return f;
}

double TabularCritic::accumulate_gradient(const CriticExample& ex, std::span<double> grad) const {
  const std::size_t state = state_index(ex.z_hat);
  const std::size_t bucket = alpha_bucket(ex.alpha);
  const double base = logit(clamp_alpha(ex.alpha));
  std::vector<double> z(slots_);
  for (std::size_t k = 0; k < slots_; ++k) z[k] = params_[cell(state, k, bucket)] + base;
  std::vector<double> dz;
  const double loss = bce(z, ex.labels, dz);
  for (std::size_t k = 0; k < slots_; ++k) grad[cell(state, k, bucket)] += dz[k];
  return loss;
}

// ---------------------------------------------------------------------------

MpnnCritic::MpnnCritic(const GraphSchema& schema, MpnnConfig config, RngStream init_rng)
    : schema_(schema.with_mask(false)),
      net_(config, schema_.d_x, schema_.d_e, 1, 1),
      params_(net_.init_params(init_rng, 0.0)) {}

MpnnCritic::MpnnCritic(const GraphSchema& schema, MpnnConfig config, std::vector<double> params)
    : schema_(schema.with_mask(false)), net_(config, schema_.d_x, schema_.d_e, 1, 1), params_(std::move(params)) {
  if (params_.size() != net_.param_count()) throw Error(ErrorKind::kFormat, "MPNN critic parameter count mismatch");
}

std::vector<double> MpnnCritic::residual(const GraphInstance& z_hat, double alpha) const {
  const auto out = net_.forward(params_, z_hat, alpha);
  std::vector<double> f;
  f.reserve(z_hat.slot_count());
  for (Eigen::Index i = 0; i < out.node_logits.rows(); ++i) f.push_back(out.node_logits(i, 0));
  for (Eigen::Index u = 0; u < out.edge_logits.rows(); ++u) f.push_back(out.edge_logits(u, 0));
  for (double v : f) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kDivergence, "non-finite critic output");
  }
  return f;
}

double MpnnCritic::accumulate_gradient(const CriticExample& ex, std::span<double> grad) const {
  Mpnn::Tape tape;
  const auto out = net_.forward(params_, ex.z_hat, ex.alpha, &tape);
  const double base = logit(clamp_alpha(ex.alpha));
  const auto n = static_cast<std::size_t>(out.node_logits.rows());
  std::vector<double> z;
  z.reserve(ex.z_hat.slot_count());
  for (Eigen::Index i = 0; i < out.node_logits.rows(); ++i) z.push_back(out.node_logits(i, 0) + base);
  for (Eigen::Index u = 0; u < out.edge_logits.rows(); ++u) z.push_back(out.edge_logits(u, 0) + base);
  std::vector<double> dz;
  const double loss = bce(z, ex.labels, dz);
  RowMatrix d_node(out.node_logits.rows(), 1);
  RowMatrix d_edge(out.edge_logits.rows(), 1);
  for (std::size_t i = 0; i < n; ++i) d_node(static_cast<Eigen::Index>(i), 0) = dz[i];
  for (Eigen::Index u = 0; u < out.edge_logits.rows(); ++u) d_edge(u, 0) = dz[n + static_cast<std::size_t>(u)];
  net_.backward(params_, tape, d_node, d_edge, grad);
  return loss;
}

// ---------------------------------------------------------------------------

CriticOutput critic_forward(const Critic& critic, const GraphInstance& z_hat, double alpha) {
  auto f = critic.residual(z_hat, alpha);
  CriticOutput out;
  out.alpha_hat.reserve(f.size());
  for (double v : f) out.alpha_hat.push_back(keep_probability(v, alpha));
  return out;
}

double optimal_critic(double p_data, double p_pred, double alpha) {
  if (!(p_data >= 0.0) || !(p_pred >= 0.0)) throw Error(ErrorKind::kDomain, "densities must be non-negative");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::kDomain, "alpha outside [0, 1]");
  const double num = alpha * p_data;
  const double den = num + (1.0 - alpha) * p_pred;
  if (den == 0.0) throw Error(ErrorKind::kUndefinedCritic, "both weighted densities are zero");
  return num / den;
}

GraphInstance fact_denoise(const GraphInstance& z_t, const CorruptionMask& a_t, const DenoiserOutput& pred,
                           const RngStream& rng) {
  if (a_t.slot_count() != z_t.slot_count() || pred.slot_count() != z_t.slot_count()) {
    throw Error(ErrorKind::kDimensionMismatch, "corruption mask or prediction does not match the instance");
  }
  GraphInstance z_hat = z_t;
  for (std::size_t k = 0; k < z_t.slot_count(); ++k) {
    if (a_t.slot(k)) continue;
    RngStream r = rng.split(k);
    z_hat.set_slot(k, static_cast<Label>(sample_categorical(pred.slot(k), r)));
  }
  return z_hat;
}

CriticExample make_critic_training_example(const GraphInstance& g1, double t, const Schedule& schedule,
                                           const NoiseSpec& spec, const Denoiser& denoiser, const RngStream& rng) {
  require_mask(spec);
  const double alpha = schedule.alpha(t);
  auto [z_t, a_t] = noise_graph_at_alpha(g1, alpha, spec, rng.split(0));
  if (a_t.all(true)) return CriticExample{std::move(z_t), std::move(a_t), alpha};
  const auto pred = denoiser.predict(z_t, alpha);
  GraphInstance z_hat = fact_denoise(z_t, a_t, pred, rng.split(1));
  return CriticExample{std::move(z_hat), std::move(a_t), alpha};
}

CriticTrainReport train_critic(std::span<const GraphInstance> dataset, const Denoiser& denoiser,
                               TrainableCritic& critic, const CriticTrainConfig& config, const Schedule& schedule,
                               const NoiseSpec& spec, const RngStream& rng, const EpochCallback& on_epoch) {
  require_mask(spec);
  if (dataset.empty()) throw Error(ErrorKind::kDomain, "critic training needs a non-empty dataset");
  if (config.train.epochs < 0 || config.train.batch_size < 1) {
    throw Error(ErrorKind::kDomain, "bad epoch or batch settings");
  }
  CriticTrainReport report;
  if (config.train.epochs == 0) return report;
  Optimizer opt(config.train.optimizer, critic.params().size());
  const RngStream example_rng = rng.split(2);
  std::vector<CriticExample> batch;
  for (int epoch = 1; epoch <= config.train.epochs; ++epoch) {
    RngStream shuffle_rng = rng.split(3, static_cast<std::uint64_t>(epoch));
    const auto perm = shuffled_indices(dataset.size(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(config.train.batch_size)) {
      const std::size_t stop = std::min(perm.size(), start + static_cast<std::size_t>(config.train.batch_size));
      batch.clear();
      for (std::size_t k = start; k < stop; ++k) {
        RngStream r = example_rng.split(static_cast<std::uint64_t>(epoch), k);
        double t = 0.0;
        if (config.t_grid.empty()) {
          t = r.uniform();
        } else {
          t = config.t_grid[static_cast<std::size_t>(
              r.uniform_int(0, static_cast<std::int64_t>(config.t_grid.size()) - 1))];
        }
        batch.push_back(make_critic_training_example(dataset[perm[k]], t, schedule, spec, denoiser, r.split(7)));
      }
      std::vector<double> grad(critic.params().size(), 0.0);
      double loss = 0.0;
      for (const auto& ex : batch) loss += critic.accumulate_gradient(ex, grad);
      const double inv = 1.0 / static_cast<double>(batch.size());
      loss *= inv;
      for (double& g : grad) g *= inv;
      if (!std::isfinite(loss)) throw Error(ErrorKind::kDivergence, "non-finite critic loss");
      opt.step(critic.mutable_params(), grad);
      for (double p : critic.params()) {
        if (!std::isfinite(p)) throw Error(ErrorKind::kDivergence, "non-finite critic parameter");
      }
      loss_sum += loss;
      ++batches;
    }
    EpochStats stats{epoch, loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1)),
                     std::numeric_limits<double>::quiet_NaN()};
    report.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return report;
}

CellCounts collect_cell_counts(const TabularCritic& critic, std::span<const CriticExample> examples) {
  CellCounts c;
  c.kept.assign(critic.params().size(), 0.0);
  c.total.assign(critic.params().size(), 0.0);
  for (const auto& ex : examples) {
    const std::size_t state = critic.state_index(ex.z_hat);
    const std::size_t bucket = critic.alpha_bucket(ex.alpha);
    for (std::size_t k = 0; k < ex.z_hat.slot_count(); ++k) {
      const std::size_t cell = critic.cell(state, k, bucket);
      c.total[cell] += 1.0;
      if (ex.labels.slot(k)) c.kept[cell] += 1.0;
    }
  }
  return c;
}

void fit_tabular_critic(TabularCritic& critic, const CellCounts& counts, int max_iters, double tol) {
  auto params = critic.mutable_params();
  if (counts.kept.size() != params.size() || counts.total.size() != params.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "cell counts do not match the table");
  }
  const auto& grid = critic.alpha_grid();
  for (std::size_t c = 0; c < params.size(); ++c) {
    const double n = counts.total[c];
    if (n <= 0.0) continue;
    const double base = logit(clamp_alpha(grid[c % grid.size()]));
    double f = params[c];
    for (int it = 0; it < max_iters; ++it) {
      const double p = sigmoid(f + base);
      const double g = n * p - counts.kept[c];
      const double h = n * p * (1.0 - p);
      if (h <= 0.0) break;
      const double step = g / h;
      f = std::clamp(f - step, -kResidualCap, kResidualCap);
      if (std::abs(step) < tol) break;
    }
    params[c] = f;
  }
}

std::pair<GraphInstance, CorruptionMask> cid_step(const GraphInstance& z_t, const CorruptionMask& a_t,
                                                  const Denoiser& denoiser, const Critic& critic, double t,
                                                  double s, const Schedule& schedule, const NoiseSpec& spec,
                                                  const RngStream& rng) {
  require_mask(spec);
  const double alpha_t = schedule.alpha(t);
  const auto pred = denoiser.predict(z_t, alpha_t);
  GraphInstance z_hat = fact_denoise(z_t, a_t, pred, rng.split(0));
  if (s >= 1.0) return {std::move(z_hat), CorruptionMask(z_t.n(), true)};
  const double alpha_s = schedule.alpha(s);
  const auto f = critic.residual(z_hat, alpha_t);
  GraphInstance z_s = z_hat;
  CorruptionMask a_s(z_t.n(), true);
  for (std::size_t k = 0; k < z_hat.slot_count(); ++k) {
    RngStream r = rng.split(1).split(k);
    if (!r.bernoulli(keep_probability(f[k], alpha_s))) {
      a_s.set_slot(k, false);
      z_s.set_slot(k, z_hat.is_node_slot(k) ? spec.schema.node_mask() : spec.schema.edge_mask());
    }
  }
  return {std::move(z_s), std::move(a_s)};
}

std::vector<CategoricalDist> cid_step_law(const GraphInstance& z_t, const CorruptionMask& a_t,
                                          const DenoiserOutput& pred, const Critic& critic, double alpha_t,
                                          double alpha_s, const NoiseSpec& spec) {
  require_mask(spec);
  const std::size_t slots = z_t.slot_count();
  std::vector<std::size_t> free;
  double combos = 1.0;
  for (std::size_t k = 0; k < slots; ++k) {
    if (!a_t.slot(k)) {
      free.push_back(k);
      combos *= static_cast<double>(pred.slot(k).size());
    }
  }
  if (combos > 1e6) throw Error(ErrorKind::kStateSpaceTooLarge, "too many filled instances to enumerate");

  std::vector<std::vector<double>> acc(slots);
  for (std::size_t k = 0; k < slots; ++k) {
    acc[k].assign(static_cast<std::size_t>(spec.input_vocab(z_t.is_node_slot(k))), 0.0);
  }
  GraphInstance z_hat = z_t;
  std::vector<std::size_t> digit(free.size(), 0);
  for (std::size_t k : free) z_hat.set_slot(k, 0);
  while (true) {
    double w = 1.0;
    for (std::size_t i = 0; i < free.size(); ++i) w *= pred.slot(free[i])[digit[i]];
    if (w > 0.0) {
      const auto f = alpha_s >= 1.0 ? std::vector<double>(slots, 0.0) : critic.residual(z_hat, alpha_t);
      for (std::size_t k = 0; k < slots; ++k) {
        const double keep = alpha_s >= 1.0 ? 1.0 : keep_probability(f[k], alpha_s);
        const Label mask = z_t.is_node_slot(k) ? spec.schema.node_mask() : spec.schema.edge_mask();
        acc[k][static_cast<std::size_t>(z_hat.slot(k))] += w * keep;
        acc[k][static_cast<std::size_t>(mask)] += w * (1.0 - keep);
      }
    }
    std::size_t i = 0;
    for (; i < free.size(); ++i) {
      if (++digit[i] < pred.slot(free[i]).size()) {
        z_hat.set_slot(free[i], static_cast<Label>(digit[i]));
        break;
      }
      digit[i] = 0;
      z_hat.set_slot(free[i], 0);
    }
    if (i == free.size()) break;
  }
  std::vector<CategoricalDist> law;
  law.reserve(slots);
  for (auto& v : acc) law.emplace_back(std::move(v));
  return law;
}

}  // namespace sidlab
