#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "sidlab/graph.hpp"
#include "sidlab/noising.hpp"
#include "sidlab/prob.hpp"

namespace sidlab {

/// Per-slot clean-label posteriors p_{1|t}(z | Z_t). Distributions are over the
/// clean vocabularies (never MASK); edge dists follow the upper-triangular order.
struct DenoiserOutput {
  int n = 0;
  std::vector<CategoricalDist> node_dists;
  std::vector<CategoricalDist> edge_dists;

  const CategoricalDist& slot(std::size_t k) const {
    return k < node_dists.size() ? node_dists[k] : edge_dists[k - node_dists.size()];
  }
  std::size_t slot_count() const noexcept { return node_dists.size() + edge_dists.size(); }
};

enum class DenoiserKind { kBayesOracle, kTabular, kMpnn };

std::string_view to_string(DenoiserKind kind);
DenoiserKind parse_denoiser_kind(std::string_view name);

class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual DenoiserKind kind() const = 0;
  /// Schema of the inputs the model accepts (includes MASK for mask noise).
  virtual const GraphSchema& input_schema() const = 0;
  virtual DenoiserOutput predict(const GraphInstance& z_t, double alpha_t) const = 0;
};

/// One noised training pair. gamma < 0 selects the default n / (n + m).
struct TrainingExample {
  GraphInstance z_t;
  double alpha_t = 0.0;
  GraphInstance g1;
  double gamma = -1.0;
};

/// A denoiser whose parameters live in one flat vector.
class TrainableDenoiser : public Denoiser {
 public:
  virtual std::span<const double> params() const = 0;
  virtual std::span<double> mutable_params() = 0;
  /// Adds d loss / d params for one example into grad and returns the loss.
  virtual double accumulate_gradient(const TrainingExample& example, std::span<double> grad) const = 0;
};

/// Weighted negative log-likelihood: gamma * sum_nodes -log p(x1) + (1 - gamma) * sum_edges -log p(e1),
/// with log-probabilities clamped below at log(1e-12).
double nll_loss(const DenoiserOutput& output, const GraphInstance& g1, double gamma);
double nll_loss(const DenoiserOutput& output, const GraphInstance& g1);

/// Exact reverse-mode gradient of the batch-mean loss. An empty batch yields zeros.
std::vector<double> gradient(const TrainableDenoiser& model, std::span<const TrainingExample> batch);
double batch_loss(const TrainableDenoiser& model, std::span<const TrainingExample> batch);

/// Exact posterior denoiser over an enumerated support.
///
/// The likelihood of a candidate G is prod_slots q_{t|1}(Z_t slot | G slot). When every
/// candidate has zero likelihood (possible only for inputs no noising path can produce,
/// e.g. inconsistent unmasked slots under mask noise) the posterior is taken in the
/// vanishing-leak limit: candidates with the fewest zero factors, weighted by prior times
/// the product of their non-zero factors.
class BayesOracle final : public Denoiser {
 public:
  BayesOracle(const ToyFamily& family, NoiseSpec spec);
  BayesOracle(std::vector<WeightedGraph> support, NoiseSpec spec);

  DenoiserKind kind() const override { return DenoiserKind::kBayesOracle; }
  const GraphSchema& input_schema() const override { return spec_.schema; }
  DenoiserOutput predict(const GraphInstance& z_t, double alpha_t) const override;

  /// Posterior over support() (zero for candidates of a different size).
  std::vector<double> posterior(const GraphInstance& z_t, double alpha_t) const;
  /// Posterior given corruption indicators. Kept slots must equal the candidate's
  /// label; corrupted slots contribute a factor that does not depend on the candidate
  /// and are therefore skipped.
  std::vector<double> posterior_factored(const GraphInstance& z_t, const CorruptionMask& a_t) const;
  DenoiserOutput predict_factored(const GraphInstance& z_t, const CorruptionMask& a_t) const;

  /// Per-slot marginals of a posterior over support().
  DenoiserOutput marginals(std::span<const double> weights, int n) const;

  const std::vector<WeightedGraph>& support() const noexcept { return support_; }
  const NoiseSpec& noise() const noexcept { return spec_; }

 private:
  std::vector<WeightedGraph> support_;
  NoiseSpec spec_;
  GraphSchema clean_schema_;
};

DenoiserOutput bayes_oracle_predict(const ToyFamily& family, const GraphInstance& z_t, double t,
                                    const Schedule& schedule, const NoiseSpec& spec);

/// Learnable lookup-table denoiser for small schemas. Each slot reads the softmax row
/// of its bucket (slot kind, own input label, number of masked slots in its
/// neighborhood). A node's neighborhood is its incident edges; an edge's is its two
/// endpoints plus the other edges incident to them.
class TabularDenoiser final : public TrainableDenoiser {
 public:
  explicit TabularDenoiser(const GraphSchema& input_schema);
  TabularDenoiser(const GraphSchema& input_schema, std::vector<double> params);

  DenoiserKind kind() const override { return DenoiserKind::kTabular; }
  const GraphSchema& input_schema() const override { return schema_; }
  DenoiserOutput predict(const GraphInstance& z_t, double alpha_t) const override;

  std::span<const double> params() const override { return params_; }
  std::span<double> mutable_params() override { return params_; }
  double accumulate_gradient(const TrainingExample& example, std::span<double> grad) const override;

  std::size_t param_count() const noexcept { return params_.size(); }

 private:
  std::size_t row_offset(bool node, Label own, int masked_neighbors) const;
  std::vector<std::size_t> slot_rows(const GraphInstance& z_t) const;

  GraphSchema schema_;
  int count_buckets_;
  std::size_t edge_table_offset_;
  std::vector<double> params_;
};

}  // namespace sidlab
