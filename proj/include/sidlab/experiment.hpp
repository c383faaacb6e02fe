#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sidlab/critic.hpp"
#include "sidlab/denoiser.hpp"
#include "sidlab/graph.hpp"
#include "sidlab/metrics.hpp"
#include "sidlab/mpnn.hpp"
#include "sidlab/noising.hpp"
#include "sidlab/samplers.hpp"
#include "sidlab/training.hpp"

namespace sidlab {

struct DenoiserSettings {
  DenoiserKind kind = DenoiserKind::kMpnn;
  MpnnConfig mpnn;
  TrainConfig train;
};

struct CriticSettings {
  bool enabled = false;
  MpnnConfig mpnn;
  TrainConfig train;
};

/// Everything one ablation run needs. Parsed from a JSON document
/// {"format":"sidlab-config","version":1,...}; see configs/ for examples.
struct ExperimentConfig {
  ToyFamily family = ToyFamily::toy_molecule();
  std::size_t dataset_size = 2000;
  NoiseKind noise = NoiseKind::kMask;
  ScheduleKind schedule = ScheduleKind::kCosine;
  DenoiserSettings denoiser;
  CriticSettings critic;
  std::vector<SamplerKind> samplers{SamplerKind::kSid};
  std::vector<int> nfe{16};
  std::size_t samples = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

/// Models used by the sampling stage. critic is null unless enabled.
struct ModelBundle {
  std::unique_ptr<Denoiser> denoiser;
  std::unique_ptr<TrainableCritic> critic;
};

using LogFn = std::function<void(const std::string&)>;

/// Derived stream for one pipeline stage: dataset, models, sampling all split from
/// RngStream(seed, 0) so each is reproducible on its own.
RngStream stage_rng(std::uint64_t seed, std::uint64_t stage);

std::vector<GraphInstance> build_dataset(const ExperimentConfig& config);
NoiseSpec build_noise(const ExperimentConfig& config, std::span<const GraphInstance> dataset);
ModelBundle train_models(const ExperimentConfig& config, std::span<const GraphInstance> dataset,
                         const LogFn& log = {});

/// Samples for one (sampler, NFE) cell.
std::vector<GraphInstance> sample_cell(const ExperimentConfig& config, std::span<const GraphInstance> dataset,
                                       const ModelBundle& models, SamplerKind sampler, int nfe, std::size_t count);

/// One metrics row per (sampler, NFE) cell, in config order.
std::vector<MetricsRow> run_ablation(const ExperimentConfig& config, std::span<const GraphInstance> dataset,
                                     const ModelBundle& models, const LogFn& log = {});

std::string format_csv(const std::vector<MetricsRow>& rows);

}  // namespace sidlab
