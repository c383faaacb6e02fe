#include "sidlab/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "sidlab/critic.hpp"
#include "sidlab/error.hpp"

namespace sidlab {

SamplerKind parse_sampler_kind(std::string_view name) {
  if (name == "sid") return SamplerKind::kSid;
  if (name == "ddm" || name == "ddm_exact") return SamplerKind::kDdmExact;
  if (name == "dfm" || name == "dfm_rate") return SamplerKind::kDfmRate;
  if (name == "corrector") return SamplerKind::kCorrector;
  if (name == "cid") return SamplerKind::kCid;
  throw Error(ErrorKind::kConfigParse, "unknown sampler '" + std::string(name) + "'");
}

std::string_view to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kSid: return "sid";
    case SamplerKind::kDdmExact: return "ddm_exact";
    case SamplerKind::kDfmRate: return "dfm_rate";
    case SamplerKind::kCorrector: return "corrector";
    case SamplerKind::kCid: return "cid";
  }
  return "sid";
}

void SamplerSpec::validate() const {
  if (T < 1) throw Error(ErrorKind::kDomain, "NFE must be at least 1");
  if (kind == SamplerKind::kCid && noise.kind != NoiseKind::kMask) {
    throw Error(ErrorKind::kDomain, "critical denoising runs on mask noise only");
  }
}

std::vector<double> time_grid(int T) {
  if (T < 1) throw Error(ErrorKind::kDomain, "NFE must be at least 1");
  std::vector<double> grid(static_cast<std::size_t>(T) + 1);
  for (int r = 0; r <= T; ++r) grid[static_cast<std::size_t>(r)] = static_cast<double>(r) / T;
  grid.back() = 1.0;
  return grid;
}

namespace {

void check_pred(const GraphInstance& z_t, const DenoiserOutput& pred) {
  if (pred.n != z_t.n() || pred.slot_count() != z_t.slot_count()) {
    throw Error(ErrorKind::kDimensionMismatch, "denoiser output does not match the instance");
  }
}

std::size_t input_k(const NoiseSpec& noise, const GraphInstance& g, std::size_t slot) {
  return noise.q0_for_slot(g, slot).size();
}

}  // namespace

GraphInstance sample_clean(const DenoiserOutput& pred, const RngStream& rng) {
  GraphInstance g(pred.n);
  for (std::size_t k = 0; k < pred.slot_count(); ++k) {
    RngStream r = rng.split(k);
    g.set_slot(k, static_cast<Label>(sample_categorical(pred.slot(k), r)));
  }
  return g;
}

GraphInstance sid_step(const GraphInstance& z_t, const Denoiser& denoiser, double t, double s,
                       const SamplerSpec& spec, const RngStream& rng) {
  const auto pred = denoiser.predict(z_t, spec.schedule.alpha(t));
  GraphInstance clean = sample_clean(pred, rng.split(0));
  if (s >= 1.0) return clean;
  return noise_graph_at_alpha(clean, spec.schedule.alpha(s), spec.noise, rng.split(1)).first;
}

GraphInstance corrector_step_maximal(const GraphInstance& z_t, const Denoiser& denoiser, double t, double s,
                                     const SamplerSpec& spec, const RngStream& rng) {
  const auto pred = denoiser.predict(z_t, spec.schedule.alpha(t));
  GraphInstance clean = sample_clean(pred, rng.split(0));
  if (s >= 1.0) return clean;
  // The composed forward walk from t = 1 to s has survival probability alpha_s.
  return noise_graph(clean, s, spec.schedule, spec.noise, rng.split(1)).first;
}

std::vector<double> ddm_forward_posterior(Label z_t, Label z1, double alpha_t, double alpha_s,
                                          const CategoricalDist& q0) {
  const std::size_t k = q0.size();
  const double r = alpha_s > 0.0 ? std::clamp(alpha_t / alpha_s, 0.0, 1.0) : 1.0;
  const auto zt = static_cast<std::size_t>(z_t);
  std::vector<double> w(k, 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    const double fwd_s = alpha_s * (j == static_cast<std::size_t>(z1) ? 1.0 : 0.0) + (1.0 - alpha_s) * q0[j];
    const double fwd_t = r * (j == zt ? 1.0 : 0.0) + (1.0 - r) * q0[zt];
    w[j] = fwd_s * fwd_t;
    total += w[j];
  }
  if (total <= 0.0) return {};
  for (double& v : w) v /= total;
  return w;
}

GraphInstance ddm_exact_step(const GraphInstance& z_t, const Denoiser& denoiser, double t, double s,
                             const SamplerSpec& spec, const RngStream& rng) {
  const double alpha_t = spec.schedule.alpha(t);
  const auto pred = denoiser.predict(z_t, alpha_t);
  // No special case at s = 1: alpha_s = 1 makes the posterior a point mass on z1,
  // except where z1 is inconsistent with z_t, which then stays frozen.
  const double alpha_s = spec.schedule.alpha(s);
  GraphInstance out = z_t;
  for (std::size_t k = 0; k < z_t.slot_count(); ++k) {
    RngStream r = rng.split(0).split(k);
    const auto z1 = static_cast<Label>(sample_categorical(pred.slot(k), r));
    const auto post = ddm_forward_posterior(z_t.slot(k), z1, alpha_t, alpha_s, spec.noise.q0_for_slot(z_t, k));
    if (post.empty()) continue;
    out.set_slot(k, static_cast<Label>(sample_categorical(post, r)));
  }
  return out;
}

double dfm_rate(const Schedule& schedule, double t, double dt) {
  const double a = schedule.alpha(t);
  if (a >= 1.0) return 1.0;
  return std::clamp(dt * schedule.alpha_dot(t) / (1.0 - a), 0.0, 1.0);
}

GraphInstance dfm_rate_step(const GraphInstance& z_t, const Denoiser& denoiser, double t, double dt,
                            const SamplerSpec& spec, const RngStream& rng) {
  const auto pred = denoiser.predict(z_t, spec.schedule.alpha(t));
  if (t + dt >= 1.0 - 1e-12) return sample_clean(pred, rng.split(0));
  const double rate = dfm_rate(spec.schedule, t, dt);
  GraphInstance out = z_t;
  for (std::size_t k = 0; k < z_t.slot_count(); ++k) {
    RngStream r = rng.split(0).split(k);
    if (r.bernoulli(rate)) out.set_slot(k, static_cast<Label>(sample_categorical(pred.slot(k), r)));
  }
  return out;
}

StepLaw sid_step_law(const GraphInstance& z_t, const DenoiserOutput& pred, double alpha_s, const NoiseSpec& noise) {
  check_pred(z_t, pred);
  StepLaw law;
  law.reserve(z_t.slot_count());
  for (std::size_t k = 0; k < z_t.slot_count(); ++k) {
    const auto& q0 = noise.q0_for_slot(z_t, k);
    std::vector<double> acc(q0.size(), 0.0);
    const auto& p = pred.slot(k);
    for (std::size_t z1 = 0; z1 < p.size(); ++z1) {
      if (p[z1] == 0.0) continue;
      const auto step = mix(CategoricalDist::delta(q0.size(), z1), q0, alpha_s);
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += p[z1] * step[j];
    }
    law.emplace_back(std::move(acc));
  }
  return law;
}

StepLaw corrector_step_law(const GraphInstance& z_t, const DenoiserOutput& pred, const Schedule& schedule,
                           std::span<const double> grid_from_one, const NoiseSpec& noise) {
  check_pred(z_t, pred);
  const auto betas = betas_from_schedule(schedule, grid_from_one);
  const TransitionMatrix node_m = compose_forward(betas, noise.node_q0);
  const TransitionMatrix edge_m = compose_forward(betas, noise.edge_q0);
  StepLaw law;
  law.reserve(z_t.slot_count());
  for (std::size_t k = 0; k < z_t.slot_count(); ++k) {
    const auto& m = z_t.is_node_slot(k) ? node_m : edge_m;
    law.emplace_back(m.apply(pred.slot(k).padded(m.size()).probs()));
  }
  return law;
}

StepLaw ddm_step_law(const GraphInstance& z_t, const DenoiserOutput& pred, double alpha_t, double alpha_s,
                     const NoiseSpec& noise) {
  check_pred(z_t, pred);
  StepLaw law;
  law.reserve(z_t.slot_count());
  for (std::size_t k = 0; k < z_t.slot_count(); ++k) {
    const auto& q0 = noise.q0_for_slot(z_t, k);
    std::vector<double> acc(q0.size(), 0.0);
    const auto& p = pred.slot(k);
    for (std::size_t z1 = 0; z1 < p.size(); ++z1) {
      if (p[z1] == 0.0) continue;
      const auto post = ddm_forward_posterior(z_t.slot(k), static_cast<Label>(z1), alpha_t, alpha_s, q0);
      if (post.empty()) {
        acc[static_cast<std::size_t>(z_t.slot(k))] += p[z1];
      } else {
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += p[z1] * post[j];
      }
    }
    law.emplace_back(std::move(acc));
  }
  return law;
}

StepLaw dfm_step_law(const GraphInstance& z_t, const DenoiserOutput& pred, double rate, const NoiseSpec& noise) {
  check_pred(z_t, pred);
  StepLaw law;
  law.reserve(z_t.slot_count());
  for (std::size_t k = 0; k < z_t.slot_count(); ++k) {
    const std::size_t kk = input_k(noise, z_t, k);
    const auto p = pred.slot(k).padded(kk);
    std::vector<double> acc(kk, 0.0);
    for (std::size_t j = 0; j < kk; ++j) acc[j] = rate * p[j];
    acc[static_cast<std::size_t>(z_t.slot(k))] += 1.0 - rate;
    law.emplace_back(std::move(acc));
  }
  return law;
}

SizeSampler SizeSampler::from_dataset(std::span<const GraphInstance> dataset) {
  if (dataset.empty()) throw Error(ErrorKind::kDomain, "size histogram needs a non-empty dataset");
  std::map<int, double> hist;
  for (const auto& g : dataset) hist[g.n()] += 1.0;
  SizeSampler s;
  std::vector<double> w;
  for (const auto& [n, c] : hist) {
    s.sizes_.push_back(n);
    w.push_back(c);
  }
  s.weights_ = CategoricalDist::from_weights(std::move(w));
  return s;
}

SizeSampler SizeSampler::fixed(int n) {
  if (n < 1) throw Error(ErrorKind::kDomain, "graph size must be positive");
  SizeSampler s;
  s.sizes_ = {n};
  s.weights_ = CategoricalDist::delta(1, 0);
  return s;
}

int SizeSampler::sample(RngStream& rng) const {
  return sizes_[sample_categorical(weights_, rng)];
}

GraphInstance initial_state(int n, const NoiseSpec& noise, const RngStream& rng) {
  GraphInstance g(n);
  for (std::size_t k = 0; k < g.slot_count(); ++k) {
    RngStream r = rng.split(k);
    g.set_slot(k, static_cast<Label>(sample_categorical(noise.q0_for_slot(g, k), r)));
  }
  return g;
}

GraphInstance run_chain(const Denoiser& denoiser, const SamplerSpec& spec, GraphInstance z, const RngStream& rng,
                        const Critic* critic) {
  spec.validate();
  if (spec.kind == SamplerKind::kCid && critic == nullptr) {
    throw Error(ErrorKind::kMissingModel, "critical denoising needs a critic");
  }
  const auto grid = time_grid(spec.T);
  CorruptionMask a(z.n(), false);
  for (int r = 0; r < spec.T; ++r) {
    const double t = grid[static_cast<std::size_t>(r)];
    const double s = grid[static_cast<std::size_t>(r) + 1];
    const RngStream step = rng.split(static_cast<std::uint64_t>(r));
    switch (spec.kind) {
      case SamplerKind::kSid: z = sid_step(z, denoiser, t, s, spec, step); break;
      case SamplerKind::kCorrector: z = corrector_step_maximal(z, denoiser, t, s, spec, step); break;
      case SamplerKind::kDdmExact: z = ddm_exact_step(z, denoiser, t, s, spec, step); break;
      case SamplerKind::kDfmRate: z = dfm_rate_step(z, denoiser, t, s - t, spec, step); break;
      case SamplerKind::kCid: {
        auto next = cid_step(z, a, denoiser, *critic, t, s, spec.schedule, spec.noise, step);
        z = std::move(next.first);
        a = std::move(next.second);
        break;
      }
    }
  }
  for (std::size_t k = 0; k < z.slot_count(); ++k) {
    if (z.slot(k) >= spec.noise.clean_vocab(z.is_node_slot(k))) {
      throw Error(ErrorKind::kMaskResidue, "MASK label survived to t = 1");
    }
  }
  return z;
}

std::vector<GraphInstance> generate(const Denoiser& denoiser, const SamplerSpec& spec, std::size_t count,
                                    const SizeSampler& sizes, const RngStream& rng, const Critic* critic) {
  std::vector<GraphInstance> out;
  out.reserve(count);
  for (std::size_t c = 0; c < count; ++c) {
    const RngStream chain = rng.split(c);
    RngStream size_rng = chain.split(0);
    const int n = sizes.sample(size_rng);
    out.push_back(run_chain(denoiser, spec, initial_state(n, spec.noise, chain.split(1)), chain.split(2), critic));
  }
  return out;
}

}  // namespace sidlab
