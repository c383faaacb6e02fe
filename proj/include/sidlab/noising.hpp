#pragma once

#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "sidlab/graph.hpp"
#include "sidlab/prob.hpp"

namespace sidlab {

enum class NoiseKind { kMask, kMarginal, kUniform };

NoiseKind parse_noise_kind(std::string_view name);
std::string_view to_string(NoiseKind kind);

/// Noise distribution q0 for nodes and edges, expressed over the schema's input
/// vocabulary (which includes MASK when schema.has_mask).
struct NoiseSpec {
  NoiseKind kind = NoiseKind::kMask;
  GraphSchema schema;
  CategoricalDist node_q0;
  CategoricalDist edge_q0;

  static NoiseSpec mask(const GraphSchema& clean_schema);
  static NoiseSpec uniform(const GraphSchema& clean_schema);
  /// Empirical label frequencies over all node slots and upper-triangular edge slots.
  static NoiseSpec marginal(const GraphSchema& clean_schema, std::span<const GraphInstance> dataset);
  static NoiseSpec make(NoiseKind kind, const GraphSchema& clean_schema,
                        std::span<const GraphInstance> dataset = {});

  const CategoricalDist& q0_for_slot(const GraphInstance& g, std::size_t slot) const {
    return g.is_node_slot(slot) ? node_q0 : edge_q0;
  }
  /// Number of clean (non-MASK) labels for the slot kind.
  int clean_vocab(bool node) const { return node ? schema.d_x : schema.d_e; }
  int input_vocab(bool node) const { return node ? schema.node_vocab() : schema.edge_vocab(); }
};

/// Sample from mix(delta_z1, q0, alpha_t).
Label noise_element(Label z1, double alpha_t, const CategoricalDist& q0, RngStream& rng);

struct FactoredDraw {
  Label label;
  bool kept;  // corruption indicator a_t
};

/// Draws a_t ~ Bernoulli(alpha_t); keeps z1 when a_t = 1, else samples q0.
FactoredDraw noise_element_factored(Label z1, double alpha_t, const CategoricalDist& q0, RngStream& rng);

/// Factored noising applied independently to every node slot and upper-triangular
/// edge slot. Slot k draws from rng.split(k).
std::pair<GraphInstance, CorruptionMask> noise_graph(const GraphInstance& g1, double t,
                                                     const Schedule& schedule, const NoiseSpec& spec,
                                                     const RngStream& rng);
std::pair<GraphInstance, CorruptionMask> noise_graph_at_alpha(const GraphInstance& g1, double alpha,
                                                              const NoiseSpec& spec, const RngStream& rng);

/// Row-stochastic K x K matrix, row-major.
class TransitionMatrix {
 public:
  explicit TransitionMatrix(std::size_t k);
  static TransitionMatrix identity(std::size_t k);
  /// Every row equal to q0.
  static TransitionMatrix rank_one(const CategoricalDist& q0);

  std::size_t size() const noexcept { return k_; }
  double operator()(std::size_t r, std::size_t c) const { return entries_[r * k_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return entries_[r * k_ + c]; }
  std::span<const double> row(std::size_t r) const { return {entries_.data() + r * k_, k_}; }

  TransitionMatrix operator*(const TransitionMatrix& rhs) const;
  /// Row vector times matrix.
  std::vector<double> apply(std::span<const double> row_vector) const;
  double max_abs_diff(const TransitionMatrix& other) const;
  bool is_row_stochastic(double tol = 1e-12) const;

 private:
  std::size_t k_;
  std::vector<double> entries_;
};

/// (1 - beta) I + beta A where every row of A is q0. Uses the node noise of spec
/// unless edges is set.
TransitionMatrix forward_transition_matrix(double beta_t, const NoiseSpec& spec, bool edges = false);
TransitionMatrix forward_transition_matrix(double beta_t, const CategoricalDist& q0);

/// Ordered product Q_1 Q_2 ... of per-step forward transition matrices.
TransitionMatrix compose_forward(std::span<const double> betas, const NoiseSpec& spec, bool edges = false);
TransitionMatrix compose_forward(std::span<const double> betas, const CategoricalDist& q0);

/// Per-step betas walking the grid from clean data (t = 1) towards t_end:
/// beta_r = 1 - alpha(t_r) / alpha(t_{r-1}), with beta = 0 when alpha(t_{r-1}) = 0.
/// Their survival product telescopes to alpha(t_end).
std::vector<double> betas_from_schedule(const Schedule& schedule, std::span<const double> grid_from_one);

}  // namespace sidlab
