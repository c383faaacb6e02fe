#include "sidlab/noising.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sidlab/error.hpp"

namespace sidlab {

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "mask") return NoiseKind::kMask;
  if (name == "marginal") return NoiseKind::kMarginal;
  if (name == "uniform") return NoiseKind::kUniform;
  throw Error(ErrorKind::kConfigParse, "unknown noise kind '" + std::string(name) + "'");
}

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kMask: return "mask";
    case NoiseKind::kMarginal: return "marginal";
    case NoiseKind::kUniform: return "uniform";
  }
  return "mask";
}

NoiseSpec NoiseSpec::mask(const GraphSchema& clean_schema) {
  NoiseSpec s;
  s.kind = NoiseKind::kMask;
  s.schema = clean_schema.with_mask(true);
  s.node_q0 = CategoricalDist::delta(static_cast<std::size_t>(s.schema.node_vocab()),
                                     static_cast<std::size_t>(s.schema.node_mask()));
  s.edge_q0 = CategoricalDist::delta(static_cast<std::size_t>(s.schema.edge_vocab()),
                                     static_cast<std::size_t>(s.schema.edge_mask()));
  return s;
}

NoiseSpec NoiseSpec::uniform(const GraphSchema& clean_schema) {
  NoiseSpec s;
  s.kind = NoiseKind::kUniform;
  s.schema = clean_schema.with_mask(false);
  s.node_q0 = CategoricalDist::uniform(static_cast<std::size_t>(s.schema.d_x));
  s.edge_q0 = CategoricalDist::uniform(static_cast<std::size_t>(s.schema.d_e));
  return s;
}

NoiseSpec NoiseSpec::marginal(const GraphSchema& clean_schema, std::span<const GraphInstance> dataset) {
  if (dataset.empty()) throw Error(ErrorKind::kDomain, "marginal noise needs a non-empty dataset");
  NoiseSpec s;
  s.kind = NoiseKind::kMarginal;
  s.schema = clean_schema.with_mask(false);
  std::vector<double> nodes(static_cast<std::size_t>(s.schema.d_x), 0.0);
  std::vector<double> edges(static_cast<std::size_t>(s.schema.d_e), 0.0);
  for (const auto& g : dataset) {
    for (Label x : g.nodes()) nodes.at(static_cast<std::size_t>(x)) += 1.0;
    for (Label e : g.e_upper()) edges.at(static_cast<std::size_t>(e)) += 1.0;
  }
  // A dataset of single-node graphs has no edge slots at all.
  if (std::all_of(edges.begin(), edges.end(), [](double c) { return c == 0.0; })) edges[0] = 1.0;
  s.node_q0 = CategoricalDist::from_weights(std::move(nodes));
  s.edge_q0 = CategoricalDist::from_weights(std::move(edges));
  return s;
}

NoiseSpec NoiseSpec::make(NoiseKind kind, const GraphSchema& clean_schema,
                          std::span<const GraphInstance> dataset) {
  switch (kind) {
    case NoiseKind::kMask: return mask(clean_schema);
    case NoiseKind::kUniform: return uniform(clean_schema);
    case NoiseKind::kMarginal: return marginal(clean_schema, dataset);
  }
  return mask(clean_schema);
}

Label noise_element(Label z1, double alpha_t, const CategoricalDist& q0, RngStream& rng) {
  const CategoricalDist law = mix(CategoricalDist::delta(q0.size(), static_cast<std::size_t>(z1)), q0, alpha_t);
  return static_cast<Label>(sample_categorical(law, rng));
}

FactoredDraw noise_element_factored(Label z1, double alpha_t, const CategoricalDist& q0, RngStream& rng) {
  if (!(alpha_t >= 0.0 && alpha_t <= 1.0)) throw Error(ErrorKind::kDomain, "alpha_t outside [0, 1]");
  if (rng.bernoulli(alpha_t)) return {z1, true};
  return {static_cast<Label>(sample_categorical(q0, rng)), false};
}

std::pair<GraphInstance, CorruptionMask> noise_graph_at_alpha(const GraphInstance& g1, double alpha,
                                                              const NoiseSpec& spec, const RngStream& rng) {
  for (std::size_t k = 0; k < g1.slot_count(); ++k) {
    const bool node = g1.is_node_slot(k);
    if (g1.slot(k) >= spec.clean_vocab(node)) {
      throw Error(ErrorKind::kMaskLabelPresent, "noise_graph expects a clean instance");
    }
  }
  GraphInstance zt = g1;
  CorruptionMask mask(g1.n(), true);
  for (std::size_t k = 0; k < g1.slot_count(); ++k) {
    RngStream r = rng.split(k);
    const auto draw = noise_element_factored(g1.slot(k), alpha, spec.q0_for_slot(g1, k), r);
    zt.set_slot(k, draw.label);
    mask.set_slot(k, draw.kept);
  }
  return {std::move(zt), std::move(mask)};
}

std::pair<GraphInstance, CorruptionMask> noise_graph(const GraphInstance& g1, double t,
                                                     const Schedule& schedule, const NoiseSpec& spec,
                                                     const RngStream& rng) {
  return noise_graph_at_alpha(g1, schedule.alpha(t), spec, rng);
}

TransitionMatrix::TransitionMatrix(std::size_t k) : k_(k), entries_(k * k, 0.0) {}

TransitionMatrix TransitionMatrix::identity(std::size_t k) {
  TransitionMatrix m(k);
  for (std::size_t i = 0; i < k; ++i) m(i, i) = 1.0;
  return m;
}

TransitionMatrix TransitionMatrix::rank_one(const CategoricalDist& q0) {
  TransitionMatrix m(q0.size());
  for (std::size_t r = 0; r < q0.size(); ++r) {
    for (std::size_t c = 0; c < q0.size(); ++c) m(r, c) = q0[c];
  }
  return m;
}

TransitionMatrix TransitionMatrix::operator*(const TransitionMatrix& rhs) const {
  if (rhs.k_ != k_) throw Error(ErrorKind::kDimensionMismatch, "transition matrix sizes differ");
  TransitionMatrix out(k_);
  for (std::size_t i = 0; i < k_; ++i) {
    for (std::size_t l = 0; l < k_; ++l) {
      const double a = (*this)(i, l);
      if (a == 0.0) continue;
      for (std::size_t j = 0; j < k_; ++j) out(i, j) += a * rhs(l, j);
    }
  }
  return out;
}

std::vector<double> TransitionMatrix::apply(std::span<const double> row_vector) const {
  if (row_vector.size() != k_) throw Error(ErrorKind::kDimensionMismatch, "vector size");
  std::vector<double> out(k_, 0.0);
  for (std::size_t i = 0; i < k_; ++i) {
    for (std::size_t j = 0; j < k_; ++j) out[j] += row_vector[i] * (*this)(i, j);
  }
  return out;
}

double TransitionMatrix::max_abs_diff(const TransitionMatrix& other) const {
  if (other.k_ != k_) throw Error(ErrorKind::kDimensionMismatch, "transition matrix sizes differ");
  double d = 0.0;
  for (std::size_t i = 0; i < entries_.size(); ++i) d = std::max(d, std::abs(entries_[i] - other.entries_[i]));
  return d;
}

bool TransitionMatrix::is_row_stochastic(double tol) const {
  for (std::size_t r = 0; r < k_; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < k_; ++c) {
      if ((*this)(r, c) < 0.0) return false;
      s += (*this)(r, c);
    }
    if (std::abs(s - 1.0) > tol) return false;
  }
  return true;
}

TransitionMatrix forward_transition_matrix(double beta_t, const CategoricalDist& q0) {
  if (!(beta_t >= 0.0 && beta_t <= 1.0)) throw Error(ErrorKind::kDomain, "beta outside [0, 1]");
  TransitionMatrix m = TransitionMatrix::rank_one(q0);
  const std::size_t k = q0.size();
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t c = 0; c < k; ++c) m(r, c) = beta_t * m(r, c) + (r == c ? 1.0 - beta_t : 0.0);
  }
  return m;
}

TransitionMatrix forward_transition_matrix(double beta_t, const NoiseSpec& spec, bool edges) {
  return forward_transition_matrix(beta_t, edges ? spec.edge_q0 : spec.node_q0);
}

TransitionMatrix compose_forward(std::span<const double> betas, const CategoricalDist& q0) {
  TransitionMatrix acc = TransitionMatrix::identity(q0.size());
  for (double beta : betas) acc = acc * forward_transition_matrix(beta, q0);
  return acc;
}

TransitionMatrix compose_forward(std::span<const double> betas, const NoiseSpec& spec, bool edges) {
  return compose_forward(betas, edges ? spec.edge_q0 : spec.node_q0);
}

std::vector<double> betas_from_schedule(const Schedule& schedule, std::span<const double> grid_from_one) {
  std::vector<double> betas;
  if (grid_from_one.size() < 2) return betas;
  betas.reserve(grid_from_one.size() - 1);
  for (std::size_t r = 1; r < grid_from_one.size(); ++r) {
    const double prev = schedule.alpha(grid_from_one[r - 1]);
    const double cur = schedule.alpha(grid_from_one[r]);
    betas.push_back(prev == 0.0 ? 0.0 : std::clamp(1.0 - cur / prev, 0.0, 1.0));
  }
  return betas;
}

}  // namespace sidlab
