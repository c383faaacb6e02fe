#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "sidlab/denoiser.hpp"
#include "sidlab/graph.hpp"
#include "sidlab/noising.hpp"
#include "sidlab/prob.hpp"

namespace sidlab {

class Critic;

enum class SamplerKind { kSid, kDdmExact, kDfmRate, kCorrector, kCid };

SamplerKind parse_sampler_kind(std::string_view name);
std::string_view to_string(SamplerKind kind);

struct SamplerSpec {
  SamplerKind kind = SamplerKind::kSid;
  int T = 16;  // number of denoiser evaluations
  NoiseSpec noise;
  Schedule schedule;

  double dt() const { return 1.0 / static_cast<double>(T); }
  void validate() const;
};

/// {0, 1/T, ..., 1} with exact endpoints.
std::vector<double> time_grid(int T);

/// Per-slot label laws of one step, in slot order, over the input vocabulary.
using StepLaw = std::vector<CategoricalDist>;

/// One clean instance drawn slot-wise from the denoiser output (slot k uses rng.split(k)).
GraphInstance sample_clean(const DenoiserOutput& pred, const RngStream& rng);

/// Predict a clean instance, then re-noise it at alpha_s. At s = 1 the prediction is returned.
GraphInstance sid_step(const GraphInstance& z_t, const Denoiser& denoiser, double t, double s,
                       const SamplerSpec& spec, const RngStream& rng);

/// Sample z1 per slot, then z_s from the forward posterior q(z_s | z_t, z1). Slots whose
/// sampled z1 gives q(z_t | z1) = 0 keep z_t.
GraphInstance ddm_exact_step(const GraphInstance& z_t, const Denoiser& denoiser, double t, double s,
                             const SamplerSpec& spec, const RngStream& rng);

/// Resample each slot from p_{1|t} with probability clamp(dt * alpha_dot / (1 - alpha), 0, 1).
GraphInstance dfm_rate_step(const GraphInstance& z_t, const Denoiser& denoiser, double t, double dt,
                            const SamplerSpec& spec, const RngStream& rng);

/// Denoise all the way to t = 1, then run the forward process back out to s.
GraphInstance corrector_step_maximal(const GraphInstance& z_t, const Denoiser& denoiser, double t, double s,
                                     const SamplerSpec& spec, const RngStream& rng);

/// Rate D_t = dt * alpha_dot(t) / (1 - alpha(t)) clamped to [0, 1].
double dfm_rate(const Schedule& schedule, double t, double dt);

/// Forward posterior q(z_s | z_t, z1) for one element over the input vocabulary.
/// Returns an empty distribution when q(z_t | z1) = 0.
std::vector<double> ddm_forward_posterior(Label z_t, Label z1, double alpha_t, double alpha_s,
                                          const CategoricalDist& q0);

// Analytic one-step laws given the denoiser output at (z_t, alpha_t).

/// Two-stage law: sum over z1 of p(z1) * mix(delta_z1, q0, alpha_s).
StepLaw sid_step_law(const GraphInstance& z_t, const DenoiserOutput& pred, double alpha_s, const NoiseSpec& noise);
/// p_{1|t} pushed through the composed forward matrices on the grid walk from t = 1 down to s.
StepLaw corrector_step_law(const GraphInstance& z_t, const DenoiserOutput& pred, const Schedule& schedule,
                           std::span<const double> grid_from_one, const NoiseSpec& noise);
StepLaw ddm_step_law(const GraphInstance& z_t, const DenoiserOutput& pred, double alpha_t, double alpha_s,
                     const NoiseSpec& noise);
StepLaw dfm_step_law(const GraphInstance& z_t, const DenoiserOutput& pred, double rate, const NoiseSpec& noise);

/// Graph sizes drawn from a histogram.
class SizeSampler {
 public:
  static SizeSampler from_dataset(std::span<const GraphInstance> dataset);
  static SizeSampler fixed(int n);

  int sample(RngStream& rng) const;
  std::span<const int> sizes() const noexcept { return sizes_; }
  const CategoricalDist& weights() const noexcept { return weights_; }

 private:
  std::vector<int> sizes_;
  CategoricalDist weights_;
};

/// Z_0 drawn slot-wise from q0 (all-MASK under mask noise).
GraphInstance initial_state(int n, const NoiseSpec& noise, const RngStream& rng);

/// Runs `count` independent chains over the time grid. Chain c draws from rng.split(c).
/// CID requires a critic. Throws mask-residue if a MASK label survives to t = 1.
std::vector<GraphInstance> generate(const Denoiser& denoiser, const SamplerSpec& spec, std::size_t count,
                                    const SizeSampler& sizes, const RngStream& rng, const Critic* critic = nullptr);

/// A single chain started from a given initial state.
GraphInstance run_chain(const Denoiser& denoiser, const SamplerSpec& spec, GraphInstance z0, const RngStream& rng,
                        const Critic* critic = nullptr);

}  // namespace sidlab
