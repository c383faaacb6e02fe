#include "sidlab/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sidlab/error.hpp"

namespace sidlab {

namespace {

constexpr double kLogFloor = -27.631021115928547;  // log(1e-12)

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = std::exp(logits[k] - mx);
    s += p[k];
  }
  for (double& v : p) v /= s;
  return p;
}

}  // namespace

std::string_view to_string(DenoiserKind kind) {
  switch (kind) {
    case DenoiserKind::kBayesOracle: return "bayes_oracle";
    case DenoiserKind::kTabular: return "tabular";
    case DenoiserKind::kMpnn: return "mpnn";
  }
  return "mpnn";
}

DenoiserKind parse_denoiser_kind(std::string_view name) {
  if (name == "bayes_oracle" || name == "bayes") return DenoiserKind::kBayesOracle;
  if (name == "tabular") return DenoiserKind::kTabular;
  if (name == "mpnn") return DenoiserKind::kMpnn;
  throw Error(ErrorKind::kConfigParse, "unknown denoiser kind '" + std::string(name) + "'");
}

double nll_loss(const DenoiserOutput& output, const GraphInstance& g1, double gamma) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error(ErrorKind::kDomain, "gamma outside [0, 1]");
  if (output.n != g1.n() || output.slot_count() != g1.slot_count()) {
    throw Error(ErrorKind::kDimensionMismatch, "denoiser output does not match the graph");
  }
  double nodes = 0.0;
  double edges = 0.0;
  for (std::size_t k = 0; k < g1.slot_count(); ++k) {
    const double p = output.slot(k)[static_cast<std::size_t>(g1.slot(k))];
    const double term = -std::max(std::log(p), kLogFloor);
    (g1.is_node_slot(k) ? nodes : edges) += term;
  }
  return gamma * nodes + (1.0 - gamma) * edges;
}

double nll_loss(const DenoiserOutput& output, const GraphInstance& g1) {
  return nll_loss(output, g1, default_gamma(g1));
}

std::vector<double> gradient(const TrainableDenoiser& model, std::span<const TrainingExample> batch) {
  std::vector<double> grad(model.params().size(), 0.0);
  if (batch.empty()) return grad;
  for (const auto& ex : batch) model.accumulate_gradient(ex, grad);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (double& g : grad) g *= inv;
  return grad;
}

double batch_loss(const TrainableDenoiser& model, std::span<const TrainingExample> batch) {
  if (batch.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : batch) {
    const double gamma = ex.gamma < 0.0 ? default_gamma(ex.g1) : ex.gamma;
    total += nll_loss(model.predict(ex.z_t, ex.alpha_t), ex.g1, gamma);
  }
  return total / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// BayesOracle

BayesOracle::BayesOracle(const ToyFamily& family, NoiseSpec spec)
    : BayesOracle(enumerate_family(family), std::move(spec)) {}

BayesOracle::BayesOracle(std::vector<WeightedGraph> support, NoiseSpec spec)
    : support_(std::move(support)), spec_(std::move(spec)), clean_schema_(spec_.schema.with_mask(false)) {
  if (support_.empty()) throw Error(ErrorKind::kDomain, "empty oracle support");
}

std::vector<double> BayesOracle::posterior(const GraphInstance& z_t, double alpha_t) const {
  if (!(alpha_t >= 0.0 && alpha_t <= 1.0)) throw Error(ErrorKind::kDomain, "alpha_t outside [0, 1]");
  const std::size_t count = support_.size();
  std::vector<int> zeros(count, std::numeric_limits<int>::max());
  std::vector<double> log_w(count, -std::numeric_limits<double>::infinity());
  int best = std::numeric_limits<int>::max();
  for (std::size_t c = 0; c < count; ++c) {
    const GraphInstance& g = support_[c].graph;
    if (g.n() != z_t.n() || support_[c].probability <= 0.0) continue;
    int z = 0;
    double lw = std::log(support_[c].probability);
    for (std::size_t k = 0; k < z_t.slot_count(); ++k) {
      const auto obs = static_cast<std::size_t>(z_t.slot(k));
      const CategoricalDist& q0 = spec_.q0_for_slot(z_t, k);
      const double like = (z_t.slot(k) == g.slot(k) ? alpha_t : 0.0) + (1.0 - alpha_t) * q0[obs];
      if (like > 0.0) {
        lw += std::log(like);
      } else {
        ++z;
      }
    }
    zeros[c] = z;
    log_w[c] = lw;
    best = std::min(best, z);
  }
  if (best == std::numeric_limits<int>::max()) {
    throw Error(ErrorKind::kDomain, "no candidate of size " + std::to_string(z_t.n()) + " in oracle support");
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < count; ++c) {
    if (zeros[c] == best) mx = std::max(mx, log_w[c]);
  }
  std::vector<double> w(count, 0.0);
  double total = 0.0;
  for (std::size_t c = 0; c < count; ++c) {
    if (zeros[c] != best) continue;
    w[c] = std::exp(log_w[c] - mx);
    total += w[c];
  }
  for (double& v : w) v /= total;
  return w;
}

std::vector<double> BayesOracle::posterior_factored(const GraphInstance& z_t, const CorruptionMask& a_t) const {
  if (a_t.slot_count() != z_t.slot_count()) throw Error(ErrorKind::kDimensionMismatch, "mask size");
  const std::size_t count = support_.size();
  std::vector<int> mismatches(count, std::numeric_limits<int>::max());
  int best = std::numeric_limits<int>::max();
  for (std::size_t c = 0; c < count; ++c) {
    const GraphInstance& g = support_[c].graph;
    if (g.n() != z_t.n() || support_[c].probability <= 0.0) continue;
    int mis = 0;
    for (std::size_t k = 0; k < z_t.slot_count(); ++k) {
      if (a_t.slot(k) && z_t.slot(k) != g.slot(k)) ++mis;
    }
    mismatches[c] = mis;
    best = std::min(best, mis);
  }
  if (best == std::numeric_limits<int>::max()) {
    throw Error(ErrorKind::kDomain, "no candidate of size " + std::to_string(z_t.n()) + " in oracle support");
  }
  std::vector<double> w(count, 0.0);
  double total = 0.0;
  for (std::size_t c = 0; c < count; ++c) {
    if (mismatches[c] != best) continue;
    w[c] = support_[c].probability;
    total += w[c];
  }
  for (double& v : w) v /= total;
  return w;
}

DenoiserOutput BayesOracle::marginals(std::span<const double> weights, int n) const {
  const std::size_t nodes = static_cast<std::size_t>(n);
  const std::size_t edges = nodes * (nodes > 0 ? nodes - 1 : 0) / 2;
  std::vector<std::vector<double>> acc(nodes + edges);
  for (std::size_t k = 0; k < acc.size(); ++k) {
    acc[k].assign(static_cast<std::size_t>(k < nodes ? clean_schema_.d_x : clean_schema_.d_e), 0.0);
  }
  for (std::size_t c = 0; c < support_.size(); ++c) {
    if (weights[c] == 0.0) continue;
    const GraphInstance& g = support_[c].graph;
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k][static_cast<std::size_t>(g.slot(k))] += weights[c];
  }
  DenoiserOutput out;
  out.n = n;
  for (std::size_t k = 0; k < acc.size(); ++k) {
    (k < nodes ? out.node_dists : out.edge_dists).push_back(CategoricalDist::from_weights(std::move(acc[k])));
  }
  return out;
}

DenoiserOutput BayesOracle::predict(const GraphInstance& z_t, double alpha_t) const {
  return marginals(posterior(z_t, alpha_t), z_t.n());
}

DenoiserOutput BayesOracle::predict_factored(const GraphInstance& z_t, const CorruptionMask& a_t) const {
  return marginals(posterior_factored(z_t, a_t), z_t.n());
}

DenoiserOutput bayes_oracle_predict(const ToyFamily& family, const GraphInstance& z_t, double t,
                                    const Schedule& schedule, const NoiseSpec& spec) {
  return BayesOracle(family, spec).predict(z_t, schedule.alpha(t));
}

// ---------------------------------------------------------------------------
// TabularDenoiser

TabularDenoiser::TabularDenoiser(const GraphSchema& input_schema)
    : schema_(input_schema), count_buckets_(2 * std::max(input_schema.n_max, 1) - 1) {
  schema_.validate();
  const auto c = static_cast<std::size_t>(count_buckets_);
  edge_table_offset_ = static_cast<std::size_t>(schema_.node_vocab()) * c * static_cast<std::size_t>(schema_.d_x);
  params_.assign(edge_table_offset_ +
                     static_cast<std::size_t>(schema_.edge_vocab()) * c * static_cast<std::size_t>(schema_.d_e),
                 0.0);
}

TabularDenoiser::TabularDenoiser(const GraphSchema& input_schema, std::vector<double> params)
    : TabularDenoiser(input_schema) {
  if (params.size() != params_.size()) throw Error(ErrorKind::kFormat, "tabular parameter count mismatch");
  params_ = std::move(params);
}

std::size_t TabularDenoiser::row_offset(bool node, Label own, int masked_neighbors) const {
  const auto c = static_cast<std::size_t>(count_buckets_);
  const auto bucket = static_cast<std::size_t>(std::min(masked_neighbors, count_buckets_ - 1));
  if (node) {
    return (static_cast<std::size_t>(own) * c + bucket) * static_cast<std::size_t>(schema_.d_x);
  }
  return edge_table_offset_ + (static_cast<std::size_t>(own) * c + bucket) * static_cast<std::size_t>(schema_.d_e);
}

std::vector<std::size_t> TabularDenoiser::slot_rows(const GraphInstance& z_t) const {
  const int n = z_t.n();
  if (n > schema_.n_max) throw Error(ErrorKind::kDimensionMismatch, "graph larger than the schema allows");
  const bool mask = schema_.has_mask;
  auto node_masked = [&](int i) { return mask && z_t.node(i) == schema_.node_mask(); };
  auto edge_masked = [&](int i, int j) { return mask && z_t.edge(i, j) == schema_.edge_mask(); };
  std::vector<std::size_t> rows(z_t.slot_count());
  for (int i = 0; i < n; ++i) {
    int c = 0;
    for (int j = 0; j < n; ++j) {
      if (j != i && edge_masked(i, j)) ++c;
    }
    rows[static_cast<std::size_t>(i)] = row_offset(true, z_t.node(i), c);
  }
  for (std::size_t e = 0; e < z_t.edge_slots(); ++e) {
    const auto [i, j] = GraphInstance::edge_endpoints(n, e);
    int c = (node_masked(i) ? 1 : 0) + (node_masked(j) ? 1 : 0);
    for (int k = 0; k < n; ++k) {
      if (k == i || k == j) continue;
      if (edge_masked(i, k)) ++c;
      if (edge_masked(j, k)) ++c;
    }
    rows[static_cast<std::size_t>(n) + e] = row_offset(false, z_t.slot(static_cast<std::size_t>(n) + e), c);
  }
  return rows;
}

DenoiserOutput TabularDenoiser::predict(const GraphInstance& z_t, double /*alpha_t*/) const {
  const auto rows = slot_rows(z_t);
  DenoiserOutput out;
  out.n = z_t.n();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const bool node = z_t.is_node_slot(k);
    const auto width = static_cast<std::size_t>(node ? schema_.d_x : schema_.d_e);
    auto p = softmax(std::span<const double>(params_.data() + rows[k], width));
    (node ? out.node_dists : out.edge_dists).emplace_back(std::move(p));
  }
  return out;
}

double TabularDenoiser::accumulate_gradient(const TrainingExample& ex, std::span<double> grad) const {
  const double gamma = ex.gamma < 0.0 ? default_gamma(ex.g1) : ex.gamma;
  const auto rows = slot_rows(ex.z_t);
  double loss = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const bool node = ex.z_t.is_node_slot(k);
    const double w = node ? gamma : 1.0 - gamma;
    const auto width = static_cast<std::size_t>(node ? schema_.d_x : schema_.d_e);
    const auto p = softmax(std::span<const double>(params_.data() + rows[k], width));
    const auto target = static_cast<std::size_t>(ex.g1.slot(k));
    const double lp = std::log(p[target]);
    if (lp > kLogFloor) {
      for (std::size_t l = 0; l < width; ++l) grad[rows[k] + l] += w * (p[l] - (l == target ? 1.0 : 0.0));
      loss -= w * lp;
    } else {
      // Clamped region: constant loss, zero gradient.
      loss -= w * kLogFloor;
    }
  }
  return loss;
}

}  // namespace sidlab
