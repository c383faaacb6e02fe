#include "sidlab/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sidlab/error.hpp"

namespace sidlab {

OptimizerKind parse_optimizer_kind(std::string_view name) {
  if (name == "sgd" || name == "sgd_momentum") return OptimizerKind::kSgdMomentum;
  if (name == "adam") return OptimizerKind::kAdam;
  throw Error(ErrorKind::kConfigParse, "unknown optimizer '" + std::string(name) + "'");
}

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

Optimizer::Optimizer(OptimizerConfig config, std::size_t param_count)
    : config_(config), m_(param_count, 0.0), v_(config.kind == OptimizerKind::kAdam ? param_count : 0, 0.0) {
  if (!(config_.lr > 0.0)) throw Error(ErrorKind::kDomain, "learning rate must be positive");
}

void Optimizer::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "optimizer state size");
  }
  ++steps_;
  if (config_.kind == OptimizerKind::kSgdMomentum) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = config_.momentum * m_[i] + grad[i];
      params[i] -= config_.lr * m_[i];
    }
    return;
  }
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grad[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
    params[i] -= config_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + config_.eps);
  }
}

std::vector<std::size_t> shuffled_indices(std::size_t count, RngStream& rng) {
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = i;
  for (std::size_t i = count; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

TrainingExample make_training_example(const GraphInstance& g1, const Schedule& schedule, const NoiseSpec& spec,
                                      RngStream rng) {
  const double t = rng.uniform();
  const double alpha = schedule.alpha(t);
  auto noised = noise_graph_at_alpha(g1, alpha, spec, rng.split(1));
  return TrainingExample{std::move(noised.first), alpha, g1, -1.0};
}

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

TrainReport train_denoiser(std::span<const GraphInstance> dataset, TrainableDenoiser& model, const TrainConfig& config,
                           const Schedule& schedule, const NoiseSpec& spec, const RngStream& rng,
                           const EpochCallback& on_epoch) {
  if (dataset.empty()) throw Error(ErrorKind::kDomain, "training needs a non-empty dataset");
  if (config.epochs < 0 || config.batch_size < 1) throw Error(ErrorKind::kDomain, "bad epoch or batch settings");
  if (!(config.holdout_fraction >= 0.0 && config.holdout_fraction < 1.0)) {
    throw Error(ErrorKind::kDomain, "holdout fraction outside [0, 1)");
  }

  RngStream split_rng = rng.split(0);
  const auto order = shuffled_indices(dataset.size(), split_rng);
  auto holdout_count = static_cast<std::size_t>(config.holdout_fraction * static_cast<double>(dataset.size()));
  if (holdout_count >= dataset.size()) holdout_count = dataset.size() - 1;
  std::vector<std::size_t> train_idx(order.begin(), order.end() - static_cast<std::ptrdiff_t>(holdout_count));
  std::vector<TrainingExample> holdout;
  const RngStream holdout_rng = rng.split(1);
  for (std::size_t k = 0; k < holdout_count; ++k) {
    const std::size_t gi = order[train_idx.size() + k];
    holdout.push_back(make_training_example(dataset[gi], schedule, spec, holdout_rng.split(k)));
  }
  auto holdout_loss = [&]() {
    return holdout.empty() ? std::numeric_limits<double>::quiet_NaN() : batch_loss(model, holdout);
  };

  TrainReport report;
  report.initial_holdout_loss = holdout_loss();
  if (config.epochs == 0) return report;

  Optimizer opt(config.optimizer, model.params().size());
  const RngStream example_rng = rng.split(2);
  std::vector<TrainingExample> batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    RngStream shuffle_rng = rng.split(3, static_cast<std::uint64_t>(epoch));
    const auto perm = shuffled_indices(train_idx.size(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(perm.size(), start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t k = start; k < stop; ++k) {
        const RngStream r = example_rng.split(static_cast<std::uint64_t>(epoch), k);
        batch.push_back(make_training_example(dataset[train_idx[perm[k]]], schedule, spec, r));
      }
      std::vector<double> grad(model.params().size(), 0.0);
      double loss = 0.0;
      for (const auto& ex : batch) loss += model.accumulate_gradient(ex, grad);
      const double inv = 1.0 / static_cast<double>(batch.size());
      loss *= inv;
      for (double& g : grad) g *= inv;
      if (!std::isfinite(loss) || !all_finite(grad)) {
        throw Error(ErrorKind::kDivergence, "non-finite loss in epoch " + std::to_string(epoch));
      }
      opt.step(model.mutable_params(), grad);
      if (!all_finite(model.params())) {
        throw Error(ErrorKind::kDivergence, "non-finite parameter in epoch " + std::to_string(epoch));
      }
      loss_sum += loss;
      ++batches;
    }
    EpochStats stats{epoch, loss_sum / static_cast<double>(std::max<std::size_t>(batches, 1)), holdout_loss()};
    if (!holdout.empty() && !std::isfinite(stats.holdout_loss)) {
      throw Error(ErrorKind::kDivergence, "non-finite held-out loss in epoch " + std::to_string(epoch));
    }
    report.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return report;
}

}  // namespace sidlab
