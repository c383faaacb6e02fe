#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "sidlab/denoiser.hpp"
#include "sidlab/graph.hpp"
#include "sidlab/mpnn.hpp"
#include "sidlab/noising.hpp"
#include "sidlab/prob.hpp"
#include "sidlab/training.hpp"

namespace sidlab {

enum class CriticKind { kZero, kTabular, kMpnn };

CriticKind parse_critic_kind(std::string_view name);
std::string_view to_string(CriticKind kind);

/// Smallest distance from {0, 1} used before taking logit(alpha).
inline constexpr double kAlphaClamp = 1e-6;
double clamp_alpha(double alpha);
/// sigmoid(residual + logit(clamp_alpha(alpha))); exactly clamp_alpha(alpha) when residual == 0.
double keep_probability(double residual, double alpha);

/// Residual-logit critic. residual() returns f(z_hat, alpha) per slot; the keep
/// probability is sigmoid(f + logit(alpha)), so f = 0 reproduces the schedule.
class Critic {
 public:
  virtual ~Critic() = default;
  virtual CriticKind kind() const = 0;
  /// Clean schema of the predicted instances it scores.
  virtual const GraphSchema& schema() const = 0;
  virtual std::vector<double> residual(const GraphInstance& z_hat, double alpha) const = 0;
};

/// One scored example: per-slot labels are 1 for slots kept from the data.
struct CriticExample {
  GraphInstance z_hat;
  CorruptionMask labels;
  double alpha = 0.0;
};

class TrainableCritic : public Critic {
 public:
  virtual std::span<const double> params() const = 0;
  virtual std::span<double> mutable_params() = 0;
  /// Adds d BCE / d params for one example into grad and returns the summed per-slot BCE.
  virtual double accumulate_gradient(const CriticExample& example, std::span<double> grad) const = 0;
};

/// f == 0 everywhere.
class ZeroCritic final : public Critic {
 public:
  explicit ZeroCritic(const GraphSchema& schema) : schema_(schema.with_mask(false)) {}
  CriticKind kind() const override { return CriticKind::kZero; }
  const GraphSchema& schema() const override { return schema_; }
  std::vector<double> residual(const GraphInstance& z_hat, double alpha) const override;

 private:
  GraphSchema schema_;
};

/// Lookup table over whole instances of one fixed size: one residual per
/// (instance, slot, alpha bucket). Alpha is bucketed to the nearest value of alpha_grid.
/// Only usable when d_x^n * d_e^m is small.
class TabularCritic final : public TrainableCritic {
 public:
  TabularCritic(const GraphSchema& schema, int n, std::vector<double> alpha_grid);
  TabularCritic(const GraphSchema& schema, int n, std::vector<double> alpha_grid, std::vector<double> params);

  CriticKind kind() const override { return CriticKind::kTabular; }
  const GraphSchema& schema() const override { return schema_; }
  std::vector<double> residual(const GraphInstance& z_hat, double alpha) const override;
  std::span<const double> params() const override { return params_; }
  std::span<double> mutable_params() override { return params_; }
  double accumulate_gradient(const CriticExample& example, std::span<double> grad) const override;

  int n() const noexcept { return n_; }
  const std::vector<double>& alpha_grid() const noexcept { return alpha_grid_; }
  std::size_t state_count() const noexcept { return state_count_; }
  std::size_t state_index(const GraphInstance& g) const;
  std::size_t alpha_bucket(double alpha) const;
  std::size_t cell(std::size_t state, std::size_t slot, std::size_t bucket) const;

 private:
  GraphSchema schema_;
  int n_;
  std::size_t slots_;
  std::size_t state_count_;
  std::vector<double> alpha_grid_;
  std::vector<double> params_;
};

/// MPNN trunk on the clean vocabularies with one scalar output per node and edge.
/// The output head starts at zero, so an untrained critic reproduces the schedule.
class MpnnCritic final : public TrainableCritic {
 public:
  MpnnCritic(const GraphSchema& schema, MpnnConfig config, RngStream init_rng);
  MpnnCritic(const GraphSchema& schema, MpnnConfig config, std::vector<double> params);

  CriticKind kind() const override { return CriticKind::kMpnn; }
  const GraphSchema& schema() const override { return schema_; }
  std::vector<double> residual(const GraphInstance& z_hat, double alpha) const override;
  std::span<const double> params() const override { return params_; }
  std::span<double> mutable_params() override { return params_; }
  double accumulate_gradient(const CriticExample& example, std::span<double> grad) const override;

  const Mpnn& net() const noexcept { return net_; }

 private:
  GraphSchema schema_;
  Mpnn net_;
  std::vector<double> params_;
};

/// Per-slot keep probabilities sigmoid(f(z_hat, alpha) + logit(alpha)).
struct CriticOutput {
  std::vector<double> alpha_hat;
};

CriticOutput critic_forward(const Critic& critic, const GraphInstance& z_hat, double alpha);

/// alpha * p_data / (alpha * p_data + (1 - alpha) * p_pred). Throws undefined-critic
/// when both densities are zero.
double optimal_critic(double p_data, double p_pred, double alpha);

/// Copies kept slots of z_t and draws the corrupted ones from the denoiser output.
GraphInstance fact_denoise(const GraphInstance& z_t, const CorruptionMask& a_t, const DenoiserOutput& pred,
                           const RngStream& rng);

/// Noise g1 at t (mask noise), then fill the corrupted slots from the denoiser.
CriticExample make_critic_training_example(const GraphInstance& g1, double t, const Schedule& schedule,
                                           const NoiseSpec& spec, const Denoiser& denoiser, const RngStream& rng);

struct CriticTrainConfig {
  TrainConfig train;
  /// When non-empty, t is drawn uniformly from these values instead of U(0,1).
  std::vector<double> t_grid;
};

struct CriticTrainReport {
  std::vector<EpochStats> epochs;
};

/// Minibatch BCE minimization against a frozen denoiser.
CriticTrainReport train_critic(std::span<const GraphInstance> dataset, const Denoiser& denoiser,
                               TrainableCritic& critic, const CriticTrainConfig& config, const Schedule& schedule,
                               const NoiseSpec& spec, const RngStream& rng, const EpochCallback& on_epoch = {});

/// Per-cell kept/total counts gathered from sampled critic examples.
struct CellCounts {
  std::vector<double> kept;
  std::vector<double> total;
};

CellCounts collect_cell_counts(const TabularCritic& critic, std::span<const CriticExample> examples);

/// Full-batch Newton iterations on the per-cell BCE of a tabular critic. Cells that
/// were never observed keep their residual.
void fit_tabular_critic(TabularCritic& critic, const CellCounts& counts, int max_iters = 100, double tol = 1e-13);

/// One critical denoising step (mask noise only): fill corrupted slots from the
/// denoiser, score the result, keep each slot with probability
/// sigmoid(f(z_hat, alpha_t) + logit(alpha_s)) and mask the rest. At s = 1 the filled
/// instance is returned with every slot kept.
std::pair<GraphInstance, CorruptionMask> cid_step(const GraphInstance& z_t, const CorruptionMask& a_t,
                                                  const Denoiser& denoiser, const Critic& critic, double t,
                                                  double s, const Schedule& schedule, const NoiseSpec& spec,
                                                  const RngStream& rng);

/// Exact per-slot law of cid_step's z_s, by enumerating the filled instances.
std::vector<CategoricalDist> cid_step_law(const GraphInstance& z_t, const CorruptionMask& a_t,
                                          const DenoiserOutput& pred, const Critic& critic, double alpha_t,
                                          double alpha_s, const NoiseSpec& spec);

}  // namespace sidlab
