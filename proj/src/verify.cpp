#include "sidlab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "sidlab/critic.hpp"
#include "sidlab/denoiser.hpp"
#include "sidlab/graph.hpp"
#include "sidlab/mpnn.hpp"
#include "sidlab/noising.hpp"
#include "sidlab/samplers.hpp"

namespace sidlab {

namespace {

std::string fmt(const char* label, double v) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%s=%.3e", label, v);
  return buf;
}

double max_law_tv(const StepLaw& a, const StepLaw& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, total_variation(a[k], b[k]));
  return worst;
}

struct Probe {
  GraphInstance z_t;
  CorruptionMask a_t;
  double t = 0.0;
};

Probe random_probe(const std::vector<WeightedGraph>& support, const NoiseSpec& spec, const Schedule& schedule,
                   RngStream rng) {
  const auto idx = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(support.size()) - 1));
  const double t = rng.uniform();
  auto [z, a] = noise_graph(support[idx].graph, t, schedule, spec, rng.split(1));
  return {std::move(z), std::move(a), t};
}

CheckResult forward_equivalence(RngStream rng) {
  const GraphSchema schema = ToyFamily::toy_molecule().schema();
  const GraphInstance g(3, 1, 1);
  const NoiseSpec specs[] = {NoiseSpec::mask(schema), NoiseSpec::uniform(schema),
                             NoiseSpec::marginal(schema, std::span<const GraphInstance>(&g, 1))};
  const int grids[] = {4, 16, 64};
  const Schedule schedule;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    RngStream r = rng.split(static_cast<std::uint64_t>(trial));
    const auto& spec = specs[r.uniform_int(0, 2)];
    const int T = grids[r.uniform_int(0, 2)];
    const int end = static_cast<int>(r.uniform_int(0, T - 1));
    std::vector<double> grid;
    for (int k = T; k >= end; --k) grid.push_back(static_cast<double>(k) / T);
    const auto betas = betas_from_schedule(schedule, grid);
    double survive = 1.0;
    for (double b : betas) survive *= 1.0 - b;
    const bool edges = r.bernoulli(0.5);
    const auto& q0 = edges ? spec.edge_q0 : spec.node_q0;
    const auto z1 = static_cast<std::size_t>(r.uniform_int(0, spec.clean_vocab(!edges) - 1));
    const auto m = compose_forward(betas, q0);
    const auto lhs = m.apply(CategoricalDist::delta(q0.size(), z1).probs());
    const auto rhs = mix(CategoricalDist::delta(q0.size(), z1), q0, survive);
    worst = std::max(worst, total_variation(lhs, rhs.probs()));
  }
  return {"forward-process equivalence", worst < 1e-10, fmt("max_tv", worst)};
}

CheckResult sid_law_checks(RngStream rng, bool corrector) {
  const ToyFamily fam = ToyFamily::triangle_free_4();
  const Schedule schedule;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    RngStream r = rng.split(static_cast<std::uint64_t>(trial));
    const NoiseSpec spec = r.bernoulli(0.5) ? NoiseSpec::mask(fam.schema()) : NoiseSpec::uniform(fam.schema());
    const BayesOracle oracle(fam, spec);
    const Probe p = random_probe(oracle.support(), spec, schedule, r.split(1));
    const int T = 8;
    const int step = std::min(T - 1, static_cast<int>(p.t * T));
    const double t = static_cast<double>(step) / T;
    const double s = static_cast<double>(step + 1) / T;
    const auto pred = oracle.predict(p.z_t, schedule.alpha(t));
    const double alpha_s = schedule.alpha(s);
    const auto law = sid_step_law(p.z_t, pred, alpha_s, spec);
    StepLaw other;
    if (corrector) {
      std::vector<double> grid;
      for (int k = T; k >= step + 1; --k) grid.push_back(static_cast<double>(k) / T);
      other = corrector_step_law(p.z_t, pred, schedule, grid, spec);
    } else {
      for (std::size_t k = 0; k < p.z_t.slot_count(); ++k) {
        const auto& q0 = spec.q0_for_slot(p.z_t, k);
        other.push_back(mix(pred.slot(k).padded(q0.size()), q0, alpha_s));
      }
    }
    worst = std::max(worst, max_law_tv(law, other));
  }
  return {corrector ? "maximal corrector matches SID" : "two-stage SID step law", worst < 1e-12,
          fmt("max_tv", worst)};
}

CheckResult mask_collapse(RngStream rng) {
  const ToyFamily fam = ToyFamily::triangle_free_4();
  const Schedule schedule;
  const NoiseSpec uni = NoiseSpec::uniform(fam.schema());
  const NoiseSpec msk = NoiseSpec::mask(fam.schema());
  const BayesOracle oracle(fam, uni);
  const BayesOracle mask_oracle(fam, msk);
  bool exact = true;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Probe p = random_probe(oracle.support(), uni, schedule, rng.split(static_cast<std::uint64_t>(trial)));
    GraphInstance masked = p.z_t;
    for (std::size_t k = 0; k < masked.slot_count(); ++k) {
      if (!p.a_t.slot(k)) masked.set_slot(k, masked.is_node_slot(k) ? msk.schema.node_mask() : msk.schema.edge_mask());
    }
    const auto a = oracle.posterior_factored(p.z_t, p.a_t);
    const auto b = oracle.posterior_factored(masked, p.a_t);
    exact = exact && a == b;
    worst = std::max(worst, total_variation(a, mask_oracle.posterior(masked, 0.5)));
  }
  return {"mask collapse", exact && worst < 1e-12, fmt("max_tv_vs_mask_posterior", worst)};
}

CheckResult critic_identities() {
  double worst = 0.0;
  for (int i = 1; i < 20; ++i) {
    const double alpha = i / 20.0;
    worst = std::max(worst, std::abs(optimal_critic(0.3, 0.3, alpha) - alpha));
    const double pd = (20.0 + 3.0 * i) / 100.0;
    const double pp = (70.0 - 2.0 * i) / 100.0;
    const double opt = optimal_critic(pd, pp, alpha);
    const double ratio = (1.0 / alpha - 1.0) / (1.0 / opt - 1.0);
    worst = std::max(worst, std::abs(ratio - pd / pp) / (pd / pp));
    if (pd != pp && (pd > pp) != (opt > alpha)) worst = 1.0;
  }
  return {"optimal critic identities", worst < 1e-12, fmt("max_err", worst)};
}

CheckResult zero_critic_cid(RngStream rng) {
  const ToyFamily fam = ToyFamily::triangle_free_4();
  const Schedule schedule;
  const NoiseSpec spec = NoiseSpec::mask(fam.schema());
  const BayesOracle oracle(fam, spec);
  const ZeroCritic critic(fam.schema());
  double worst = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    const Probe p = random_probe(oracle.support(), spec, schedule, rng.split(static_cast<std::uint64_t>(trial)));
    const int step = std::min(7, static_cast<int>(p.t * 8));
    const double alpha_t = schedule.alpha(step / 8.0);
    const double alpha_s = schedule.alpha((step + 1) / 8.0);
    const auto pred = oracle.predict(p.z_t, alpha_t);
    const auto cid = cid_step_law(p.z_t, p.a_t, pred, critic, alpha_t, alpha_s, spec);
    worst = std::max(worst, max_law_tv(cid, sid_step_law(p.z_t, pred, alpha_s, spec)));
  }
  return {"zero critic reduces to mask SID", worst < 1e-12, fmt("max_tv", worst)};
}

CheckResult ddm_mask_freeze(RngStream rng) {
  const ToyFamily fam = ToyFamily::triangle_free_4();
  SamplerSpec spec;
  spec.kind = SamplerKind::kDdmExact;
  spec.T = 16;
  spec.noise = NoiseSpec::mask(fam.schema());
  const BayesOracle oracle(fam, spec.noise);
  const auto grid = time_grid(spec.T);
  std::size_t violations = 0;
  for (int chain = 0; chain < 200; ++chain) {
    const RngStream c = rng.split(static_cast<std::uint64_t>(chain));
    GraphInstance z = initial_state(4, spec.noise, c.split(0));
    for (int r = 0; r + 1 < spec.T; ++r) {
      GraphInstance next = ddm_exact_step(z, oracle, grid[r], grid[r + 1], spec, c.split(1, r));
      for (std::size_t k = 0; k < z.slot_count(); ++k) {
        if (z.slot(k) < spec.noise.clean_vocab(z.is_node_slot(k)) && next.slot(k) != z.slot(k)) ++violations;
      }
      z = std::move(next);
    }
  }
  return {"mask DDM never changes an unmasked slot", violations == 0,
          "violations=" + std::to_string(violations)};
}

CheckResult mpnn_gradient(RngStream rng) {
  const GraphSchema schema = ToyFamily::toy_molecule(3, 4).schema(true);
  MpnnDenoiser model(schema, MpnnConfig{1, 8}, rng.split(0));
  std::vector<TrainingExample> batch;
  for (int b = 0; b < 2; ++b) {
    RngStream r = rng.split(1, static_cast<std::uint64_t>(b));
    const int n = 3 + b;
    GraphInstance z(n), g(n);
    for (std::size_t k = 0; k < z.slot_count(); ++k) {
      const bool node = z.is_node_slot(k);
      z.set_slot(k, static_cast<Label>(r.uniform_int(0, (node ? schema.node_vocab() : schema.edge_vocab()) - 1)));
      g.set_slot(k, static_cast<Label>(r.uniform_int(0, (node ? schema.d_x : schema.d_e) - 1)));
    }
    batch.push_back({z, r.uniform(), g, -1.0});
  }
  const auto grad = gradient(model, batch);
  auto params = model.mutable_params();
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = batch_loss(model, batch);
    params[i] = keep - h;
    const double down = batch_loss(model, batch);
    params[i] = keep;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-3}));
  }
  return {"MPNN reverse-mode gradient", worst < 1e-4, fmt("max_rel_err", worst)};
}

CheckResult mpnn_equivariance(RngStream rng) {
  const GraphSchema schema = ToyFamily::toy_molecule().schema(true);
  const MpnnDenoiser model(schema, MpnnConfig{2, 16}, rng.split(0));
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    RngStream r = rng.split(1, static_cast<std::uint64_t>(trial));
    const int n = static_cast<int>(r.uniform_int(2, 7));
    GraphInstance z(n);
    for (std::size_t k = 0; k < z.slot_count(); ++k) {
      z.set_slot(k, static_cast<Label>(
                        r.uniform_int(0, (z.is_node_slot(k) ? schema.node_vocab() : schema.edge_vocab()) - 1)));
    }
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[r.uniform_int(0, i)]);
    const double alpha = r.uniform();
    const auto a = model.predict(z, alpha);
    const auto b = model.predict(z.permuted(perm), alpha);
    for (int i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < a.node_dists[i].size(); ++c) {
        worst = std::max(worst, std::abs(a.node_dists[i][c] - b.node_dists[perm[i]][c]));
      }
      for (int j = i + 1; j < n; ++j) {
        const auto& ea = a.edge_dists[GraphInstance::edge_index(n, i, j)];
        const auto& eb = b.edge_dists[GraphInstance::edge_index(n, perm[i], perm[j])];
        for (std::size_t c = 0; c < ea.size(); ++c) worst = std::max(worst, std::abs(ea[c] - eb[c]));
      }
    }
  }
  return {"MPNN permutation equivariance", worst < 1e-10, fmt("max_dev", worst)};
}

}  // namespace

std::vector<CheckResult> run_property_suite(std::uint64_t seed) {
  const RngStream root(seed, 0x7e51);
  std::vector<CheckResult> out;
  out.push_back(forward_equivalence(root.split(1)));
  out.push_back(sid_law_checks(root.split(2), false));
  out.push_back(sid_law_checks(root.split(2), true));
  out.push_back(mask_collapse(root.split(3)));
  out.push_back(critic_identities());
  out.push_back(zero_critic_cid(root.split(4)));
  out.push_back(ddm_mask_freeze(root.split(5)));
  out.push_back(mpnn_gradient(root.split(6)));
  out.push_back(mpnn_equivariance(root.split(7)));
  return out;
}

}  // namespace sidlab
