#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "sidlab/denoiser.hpp"
#include "sidlab/graph.hpp"
#include "sidlab/noising.hpp"
#include "sidlab/prob.hpp"

namespace sidlab {

enum class OptimizerKind { kSgdMomentum, kAdam };

OptimizerKind parse_optimizer_kind(std::string_view name);
std::string_view to_string(OptimizerKind kind);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgdMomentum;
  double lr = 2e-4;
  double momentum = 0.9;  // SGD only
  double beta1 = 0.9;     // Adam only
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First-order update rule with its own state vector(s).
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::size_t param_count);

  void step(std::span<double> params, std::span<const double> grad);
  std::size_t steps() const noexcept { return steps_; }

 private:
  OptimizerConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t steps_ = 0;
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 32;
  OptimizerConfig optimizer;
  /// Share of the dataset withheld for the per-epoch held-out loss (0 disables it).
  double holdout_fraction = 0.1;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;    // mean over the epoch's minibatches
  double holdout_loss = 0.0;  // NaN when there is no held-out split
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  /// Held-out loss of the initial model (epoch 0), NaN without a held-out split.
  double initial_holdout_loss = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Draws t ~ U(0,1) and noises g1 at alpha(t) with factored noising.
TrainingExample make_training_example(const GraphInstance& g1, const Schedule& schedule, const NoiseSpec& spec,
                                      RngStream rng);

/// Minibatch optimization of the weighted NLL. Every example redraws its noise level;
/// the held-out split uses noise fixed once up front so epochs are comparable.
/// Throws divergence if the loss or any parameter becomes non-finite.
TrainReport train_denoiser(std::span<const GraphInstance> dataset, TrainableDenoiser& model, const TrainConfig& config,
                           const Schedule& schedule, const NoiseSpec& spec, const RngStream& rng,
                           const EpochCallback& on_epoch = {});

/// Fisher-Yates shuffle of 0..count-1.
std::vector<std::size_t> shuffled_indices(std::size_t count, RngStream& rng);

}  // namespace sidlab
