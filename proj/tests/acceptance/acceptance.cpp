// Acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero if any fails.
// Reference values are computed here, independently of the library, wherever possible.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sidlab/critic.hpp"
#include "sidlab/denoiser.hpp"
#include "sidlab/error.hpp"
#include "sidlab/experiment.hpp"
#include "sidlab/io.hpp"
#include "sidlab/mpnn.hpp"
#include "sidlab/noising.hpp"
#include "sidlab/samplers.hpp"

using namespace sidlab;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::vector<double> as_vec(const CategoricalDist& d) { return {d.probs().begin(), d.probs().end()}; }

double tv(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}

// cos^2((1 - t) pi / 2), written out here rather than taken from the library.
double cosine_keep(double t) {
  const double c = std::cos((1.0 - t) * std::numbers::pi / 2.0);
  return c * c;
}

std::string config_path(const std::string& name) { return std::string(SIDLAB_CONFIG_DIR) + "/" + name; }

// ---------------------------------------------------------------------------------------------
// 1. Composed forward matrices equal the one-shot mixture at the telescoped keep probability.

Outcome forward_equivalence() {
  const ToyFamily mol = ToyFamily::toy_molecule(3, 5);
  const auto data = generate_dataset(mol, 200, RngStream(101, 0));
  const std::vector<NoiseSpec> specs{NoiseSpec::mask(mol.schema()), NoiseSpec::marginal(mol.schema(), data),
                                     NoiseSpec::uniform(mol.schema())};
  const Schedule sched;
  RngStream rng(1, 1);
  double worst = 0.0, worst_keep = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const NoiseSpec& spec = specs[static_cast<std::size_t>(trial % 3)];
    const int T = std::vector<int>{4, 16, 64}[static_cast<std::size_t>(rng.uniform_int(0, 2))];
    const bool edges = rng.bernoulli(0.5);
    const CategoricalDist& q0 = edges ? spec.edge_q0 : spec.node_q0;
    const auto z1 = static_cast<std::size_t>(rng.uniform_int(0, spec.clean_vocab(!edges) - 1));
    const int end = static_cast<int>(rng.uniform_int(0, T - 1));
    std::vector<double> grid;
    for (int k = T; k >= end; --k) grid.push_back(static_cast<double>(k) / T);
    const auto betas = betas_from_schedule(sched, grid);

    std::vector<double> start(q0.size(), 0.0);
    start[z1] = 1.0;
    const auto composed = compose_forward(betas, q0).apply(start);
    // one step at a time: v <- (1 - b) v + b q0
    std::vector<double> stepped = start;
    double survive = 1.0;
    for (double b : betas) {
      for (std::size_t c = 0; c < stepped.size(); ++c) stepped[c] = (1 - b) * stepped[c] + b * q0[c];
      survive *= 1.0 - b;
    }
    std::vector<double> closed(q0.size());
    for (std::size_t c = 0; c < closed.size(); ++c) closed[c] = survive * (c == z1) + (1 - survive) * q0[c];
    worst = std::max({worst, tv(composed, closed), tv(stepped, closed),
                      tv(as_vec(mix(CategoricalDist::delta(q0.size(), z1), q0, survive)), closed)});
    worst_keep = std::max(worst_keep, std::abs(survive - cosine_keep(static_cast<double>(end) / T)));
  }
  return {worst < 1e-10 && worst_keep < 1e-12,
          "max_tv=" + fmt("%.2e", worst) + " keep_err=" + fmt("%.2e", worst_keep)};
}

// ---------------------------------------------------------------------------------------------
// 2 and 3. One-step laws on enumerated probes with the Bayes oracle.

struct Probe {
  std::size_t spec;
  GraphInstance z;
  int T;
  int k;  // t = k / T, s = (k + 1) / T
};

struct ProbeSet {
  ToyFamily family = ToyFamily::triangle_free_4();
  std::vector<oracle::Weighted> support = oracle::triangle_free_4_support();
  std::vector<NoiseSpec> specs;
  std::vector<BayesOracle> oracles;
  std::vector<Probe> probes;
};

ProbeSet make_probes() {
  ProbeSet ps;
  std::vector<GraphInstance> graphs;
  for (const auto& w : ps.support) graphs.push_back(w.g);
  ps.specs = {NoiseSpec::mask(ps.family.schema()), NoiseSpec::uniform(ps.family.schema()),
              NoiseSpec::marginal(ps.family.schema(), graphs)};
  for (const auto& s : ps.specs) ps.oracles.emplace_back(ps.family, s);
  const Schedule sched;
  RngStream rng(2, 2);
  for (int i = 0; i < 50; ++i) {
    Probe p;
    p.spec = static_cast<std::size_t>(i % 3);
    p.T = std::vector<int>{4, 8, 16}[static_cast<std::size_t>(rng.uniform_int(0, 2))];
    p.k = static_cast<int>(rng.uniform_int(0, p.T - 1));
    const auto& g = ps.support[static_cast<std::size_t>(rng.uniform_int(0, 18))].g;
    p.z = noise_graph(g, static_cast<double>(p.k) / p.T, sched, ps.specs[p.spec], rng.split(static_cast<std::uint64_t>(i)))
              .first;
    ps.probes.push_back(std::move(p));
  }
  return ps;
}

Outcome sid_law(const ProbeSet& ps) {
  double worst = 0.0, worst_pred = 0.0;
  for (const auto& p : ps.probes) {
    const NoiseSpec& spec = ps.specs[p.spec];
    const double at = cosine_keep(static_cast<double>(p.k) / p.T), as = cosine_keep(static_cast<double>(p.k + 1) / p.T);
    const auto w = oracle::posterior(ps.support, p.z, at, spec);
    const auto m = oracle::slot_marginals(ps.support, w, 4, spec.schema.d_x, spec.schema.d_e);
    const auto pred = ps.oracles[p.spec].predict(p.z, at);
    const auto law = sid_step_law(p.z, pred, as, spec);
    for (std::size_t k = 0; k < p.z.slot_count(); ++k) {
      const bool node = p.z.is_node_slot(k);
      const auto& q0 = node ? spec.node_q0 : spec.edge_q0;
      std::vector<double> expected(q0.size());
      for (std::size_t c = 0; c < q0.size(); ++c) expected[c] = (1 - as) * q0[c] + (c < m[k].size() ? as * m[k][c] : 0.0);
      worst = std::max(worst, tv(as_vec(law[k]), expected));
      worst_pred = std::max(worst_pred, oracle::max_abs(as_vec(pred.slot(k)), m[k]));
    }
  }
  return {worst < 1e-12 && worst_pred < 1e-12,
          "probes=50 max_tv=" + fmt("%.2e", worst) + " oracle_err=" + fmt("%.2e", worst_pred)};
}

Outcome corrector_law(const ProbeSet& ps) {
  const Schedule sched;
  double worst = 0.0;
  for (const auto& p : ps.probes) {
    const NoiseSpec& spec = ps.specs[p.spec];
    const double t = static_cast<double>(p.k) / p.T;
    const auto pred = ps.oracles[p.spec].predict(p.z, cosine_keep(t));
    std::vector<double> grid;
    for (int j = p.T; j >= p.k + 1; --j) grid.push_back(static_cast<double>(j) / p.T);
    const auto corr = corrector_step_law(p.z, pred, sched, grid, spec);
    const auto sid = sid_step_law(p.z, pred, cosine_keep(static_cast<double>(p.k + 1) / p.T), spec);
    for (std::size_t k = 0; k < corr.size(); ++k) worst = std::max(worst, tv(as_vec(corr[k]), as_vec(sid[k])));
  }
  return {worst < 1e-12, "probes=50 max_tv=" + fmt("%.2e", worst)};
}

// ---------------------------------------------------------------------------------------------
// 4. Tabular critic on an enumerable two-node space vs the optimal critic.

// Memoizes predictions; the critic data stream only ever visits a few dozen inputs.
class CachedDenoiser final : public Denoiser {
 public:
  explicit CachedDenoiser(const Denoiser& inner) : inner_(inner) {}
  DenoiserKind kind() const override { return inner_.kind(); }
  const GraphSchema& input_schema() const override { return inner_.input_schema(); }
  DenoiserOutput predict(const GraphInstance& z_t, double alpha_t) const override {
    auto key = std::make_pair(z_t, alpha_t);
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(std::move(key), inner_.predict(z_t, alpha_t)).first;
    return it->second;
  }

 private:
  const Denoiser& inner_;
  mutable std::map<std::pair<GraphInstance, double>, DenoiserOutput> cache_;
};

Outcome optimal_critic_recovery() {
  GraphSchema schema;
  schema.d_x = 2;
  schema.d_e = 2;
  schema.n_min = schema.n_max = 2;
  const std::vector<oracle::Weighted> support{{GraphInstance({0, 0}, {1}), 0.55},
                                              {GraphInstance({0, 1}, {0}), 0.25},
                                              {GraphInstance({1, 1}, {1}), 0.15},
                                              {GraphInstance({1, 0}, {1}), 0.05}};
  const NoiseSpec spec = NoiseSpec::mask(schema);
  std::vector<WeightedGraph> lib_support;
  for (const auto& w : support) lib_support.push_back({w.g, w.p});
  const BayesOracle bayes(lib_support, spec);
  const CachedDenoiser denoiser(bayes);
  const Schedule sched;
  const double t = 0.5, alpha = cosine_keep(t);
  const std::size_t slots = 3, states = 8;

  auto decode = [](std::size_t s) {
    return GraphInstance({static_cast<Label>(s & 1u), static_cast<Label>(s >> 1 & 1u)}, {static_cast<Label>(s >> 2 & 1u)});
  };

  // joint[state][slot][a] = P(Z_hat = state, a_slot = a), by enumerating G and the corruption pattern
  std::vector<std::vector<std::array<double, 2>>> joint(states, std::vector<std::array<double, 2>>(slots, {0.0, 0.0}));
  for (const auto& w : support) {
    for (unsigned a = 0; a < 8; ++a) {
      CorruptionMask mask(2, true);
      double pa = 1.0;
      for (std::size_t k = 0; k < slots; ++k) {
        const bool kept = a >> k & 1u;
        mask.set_slot(k, kept);
        pa *= kept ? alpha : 1 - alpha;
      }
      const auto post = oracle::posterior_given_mask(support, w.g, mask);
      const auto m = oracle::slot_marginals(support, post, 2, 2, 2);
      for (std::size_t s = 0; s < states; ++s) {
        const auto zh = decode(s);
        double pz = 1.0;
        for (std::size_t k = 0; k < slots; ++k) {
          pz *= mask.slot(k) ? (zh.slot(k) == w.g.slot(k) ? 1.0 : 0.0) : m[k][static_cast<std::size_t>(zh.slot(k))];
        }
        for (std::size_t k = 0; k < slots; ++k) joint[s][k][mask.slot(k) ? 1 : 0] += w.p * pa * pz;
      }
    }
  }

  TabularCritic critic(schema, 2, {alpha});
  CellCounts counts{std::vector<double>(critic.params().size(), 0.0), std::vector<double>(critic.params().size(), 0.0)};
  const std::size_t total = 40'000'000, chunk = 100'000;
  const RngStream root(4, 0);
  RngStream pick(4, 1);
  std::vector<CriticExample> batch;
  batch.reserve(chunk);
  for (std::size_t done = 0; done < total; done += chunk) {
    batch.clear();
    for (std::size_t i = 0; i < chunk; ++i) {
      const double u = pick.uniform();
      std::size_t g = 0;
      for (double acc = support[0].p; g + 1 < support.size() && u >= acc; acc += support[++g].p) {
      }
      batch.push_back(make_critic_training_example(support[g].g, t, sched, spec, denoiser, root.split(done + i)));
    }
    const auto c = collect_cell_counts(critic, batch);
    for (std::size_t i = 0; i < c.total.size(); ++i) {
      counts.kept[i] += c.kept[i];
      counts.total[i] += c.total[i];
    }
  }
  fit_tabular_critic(critic, counts);

  struct Cell {
    std::size_t state, slot;
    double visits;
  };
  std::vector<Cell> cells;
  for (std::size_t s = 0; s < states; ++s)
    for (std::size_t k = 0; k < slots; ++k)
      if (joint[s][k][0] > 0 && joint[s][k][1] > 0) cells.push_back({s, k, counts.total[critic.cell(critic.state_index(decode(s)), k, 0)]});
  std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) { return a.visits > b.visits; });
  if (cells.size() > 12) cells.resize(12);

  double worst_abs = 0.0, worst_identity = 0.0, worst_odds = 0.0;
  int sign_ok = 0;
  for (const auto& c : cells) {
    const double pd = joint[c.state][c.slot][1] / alpha, pp = joint[c.state][c.slot][0] / (1 - alpha);
    const double target = alpha * pd / (alpha * pd + (1 - alpha) * pp);
    const double closed = optimal_critic(pd, pp, alpha);
    const double trained = critic_forward(critic, decode(c.state), alpha).alpha_hat[c.slot];
    worst_abs = std::max({worst_abs, std::abs(trained - closed), std::abs(closed - target)});
    worst_identity = std::max(worst_identity, std::abs(optimal_critic(pd, pd, alpha) - alpha));
    const double gap = pd - pp;
    if (std::abs(gap) < 1e-12 ? std::abs(trained - alpha) < 1e-3 : (trained - alpha) * gap > 0) ++sign_ok;
    const double odds = (trained / (1 - trained)) / (alpha / (1 - alpha));
    worst_odds = std::max(worst_odds, std::abs(odds - pd / pp) / (pd / pp));
  }
  const bool pass = cells.size() >= 10 && worst_abs < 1e-3 && worst_identity < 1e-15 &&
                    sign_ok == static_cast<int>(cells.size()) && worst_odds < 1e-2;
  return {pass, "probes=" + std::to_string(cells.size()) + " max_abs_err=" + fmt("%.2e", worst_abs) +
                    " sign_ok=" + std::to_string(sign_ok) + " max_odds_rel_err=" + fmt("%.2e", worst_odds) +
                    " identity_err=" + fmt("%.1e", worst_identity)};
}

// ---------------------------------------------------------------------------------------------
// 5. Posterior given corruption indicators ignores what sits in the corrupted slots.

Outcome mask_collapse(const ProbeSet& ps) {
  const Schedule sched;
  const NoiseSpec& mask_spec = ps.specs[0];
  const BayesOracle& mask_oracle = ps.oracles[0];
  RngStream rng(5, 5);
  int exact = 0;
  double worst_cross = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t kind = static_cast<std::size_t>(i % 3);
    const auto& g = ps.support[static_cast<std::size_t>(rng.uniform_int(0, 18))].g;
    const double t = rng.uniform();
    auto [z, a] = noise_graph(g, t, sched, ps.specs[kind], rng.split(static_cast<std::uint64_t>(i)));
    GraphInstance masked = z, scrambled = z;
    for (std::size_t k = 0; k < z.slot_count(); ++k) {
      if (a.slot(k)) continue;
      const bool node = z.is_node_slot(k);
      masked.set_slot(k, node ? mask_spec.schema.node_mask() : mask_spec.schema.edge_mask());
      scrambled.set_slot(k, static_cast<Label>(rng.uniform_int(0, ps.specs[kind].clean_vocab(node) - 1)));
    }
    const auto w = ps.oracles[kind].posterior_factored(z, a);
    const bool same = w == mask_oracle.posterior_factored(masked, a) && w == ps.oracles[kind].posterior_factored(scrambled, a);
    const auto pz = ps.oracles[kind].predict_factored(z, a), pm = mask_oracle.predict_factored(masked, a);
    bool same_pred = true;
    for (std::size_t k = 0; k < pz.slot_count(); ++k) same_pred = same_pred && as_vec(pz.slot(k)) == as_vec(pm.slot(k));
    if (same && same_pred) ++exact;
    // the collapsed posterior is the ordinary mask-noise Bayes posterior
    const double alpha = sched.alpha(t);
    if (alpha < 1.0) {
      worst_cross = std::max(worst_cross, oracle::max_abs(w, oracle::posterior(ps.support, masked, alpha, mask_spec)));
    }
    worst_cross = std::max(worst_cross, oracle::max_abs(w, oracle::posterior_given_mask(ps.support, z, a)));
  }
  return {exact == 100 && worst_cross < 1e-12,
          "exact=" + std::to_string(exact) + "/100 max_dev_vs_mask_bayes=" + fmt("%.2e", worst_cross)};
}

// ---------------------------------------------------------------------------------------------
// 6. Reverse-mode gradients vs central differences.

template <class Model, class Batch, class LossFn>
double fd_worst(Model& model, const Batch& batch, const std::vector<double>& grad, LossFn loss) {
  auto params = model.mutable_params();
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = loss(model, batch);
    params[i] = keep - h;
    const double down = loss(model, batch);
    params[i] = keep;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6}));
  }
  return worst;
}

Outcome gradient_check() {
  const ToyFamily mol = ToyFamily::toy_molecule(2, 5);
  const NoiseSpec spec = NoiseSpec::mask(mol.schema());
  const auto data = generate_dataset(mol, 2, RngStream(6, 0));
  const Schedule sched;
  MpnnDenoiser den(spec.schema, MpnnConfig{1, 8}, RngStream(6, 1));
  std::vector<TrainingExample> batch;
  for (std::size_t i = 0; i < data.size(); ++i) batch.push_back(make_training_example(data[i], sched, spec, RngStream(6, 2 + i)));
  const double den_err = fd_worst(den, batch, gradient(den, batch),
                                  [](const MpnnDenoiser& m, const std::vector<TrainingExample>& b) { return batch_loss(m, b); });

  MpnnCritic critic(mol.schema(), MpnnConfig{1, 8}, RngStream(6, 10));
  RngStream r(6, 11);
  // move off the zero-initialized head so every parameter carries gradient
  for (double& p : critic.mutable_params()) p += 0.2 * (r.uniform() - 0.5);
  const BayesOracle bayes(ToyFamily::toy_molecule(3, 3), NoiseSpec::mask(ToyFamily::toy_molecule(3, 3).schema()));
  std::vector<CriticExample> cbatch;
  for (int i = 0; i < 2; ++i) {
    const auto g = generate_dataset(ToyFamily::toy_molecule(3, 3), 1, RngStream(6, 20 + static_cast<std::uint64_t>(i)))[0];
    cbatch.push_back(make_critic_training_example(g, 0.3 + 0.2 * i, sched, bayes.noise(), bayes, RngStream(6, 30 + static_cast<std::uint64_t>(i))));
  }
  auto critic_loss = [](const MpnnCritic& c, const std::vector<CriticExample>& b) {
    std::vector<double> scratch(c.params().size(), 0.0);
    double l = 0.0;
    for (const auto& ex : b) l += c.accumulate_gradient(ex, scratch);
    return l;
  };
  std::vector<double> cgrad(critic.params().size(), 0.0);
  for (const auto& ex : cbatch) critic.accumulate_gradient(ex, cgrad);
  const double critic_err = fd_worst(critic, cbatch, cgrad, critic_loss);
  return {den_err < 1e-4 && critic_err < 1e-4,
          "denoiser_params=" + std::to_string(den.params().size()) + " max_rel_err=" + fmt("%.2e", den_err) +
              " critic_params=" + std::to_string(critic.params().size()) + " max_rel_err=" + fmt("%.2e", critic_err)};
}

// ---------------------------------------------------------------------------------------------
// 7. Permutation equivariance of the MPNN denoiser.

Outcome equivariance() {
  const ToyFamily mol = ToyFamily::toy_molecule();
  const NoiseSpec spec = NoiseSpec::mask(mol.schema());
  const MpnnDenoiser net(spec.schema, MpnnConfig{2, 32}, RngStream(7, 0));
  RngStream rng(7, 1);
  double worst = 0.0;
  int graphs = 0;
  for (; graphs < 10; ++graphs) {
    const int n = static_cast<int>(rng.uniform_int(2, 8));
    const auto z = oracle::random_graph(n, spec.schema.node_vocab(), spec.schema.edge_vocab(), rng);
    const double alpha = rng.uniform();
    const auto out = net.predict(z, alpha);
    for (int p = 0; p < 20; ++p) {
      const auto perm = oracle::random_permutation(n, rng);
      const auto po = net.predict(z.permuted(perm), alpha);
      for (int i = 0; i < n; ++i)
        worst = std::max(worst, oracle::max_abs(as_vec(out.node_dists[i]), as_vec(po.node_dists[perm[i]])));
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
          worst = std::max(worst, oracle::max_abs(as_vec(out.edge_dists[GraphInstance::edge_index(n, i, j)]),
                                                  as_vec(po.edge_dists[GraphInstance::edge_index(n, perm[i], perm[j])])));
    }
  }
  return {worst < 1e-10, "graphs=" + std::to_string(graphs) + " perms=20 max_dev=" + fmt("%.2e", worst)};
}

// ---------------------------------------------------------------------------------------------
// 8. Exact law of Bayes-oracle SID (mask noise, T = 8) on the triangle-free family.
//
// States are 4 node labels in {0, MASK} and 6 edge labels in {0, 1, MASK}: 2^4 * 3^6 = 11664.
// Every SID step redraws each slot independently, so the transition out of a state is a
// product law and the full chain can be pushed forward exactly.

struct MaskChain {
  static constexpr int kSlots = 10;
  static constexpr int kRadix[kSlots] = {2, 2, 2, 2, 3, 3, 3, 3, 3, 3};
  static constexpr std::size_t kStates = 16 * 729;

  std::vector<oracle::Weighted> support = oracle::triangle_free_4_support();

  static GraphInstance decode(std::size_t s) {
    GraphInstance g(4);
    for (int k = 0; k < kSlots; ++k) {
      g.set_slot(static_cast<std::size_t>(k), static_cast<Label>(s % kRadix[k]));
      s /= kRadix[k];
    }
    return g;
  }

  // Bayes posterior marginals under mask noise. When no candidate explains z (jointly
  // inconsistent unmasked slots) the vanishing-leak limit is used: keep the candidates with
  // the fewest impossible slots, weighted by prior times their remaining likelihood.
  std::vector<std::vector<double>> marginals(const GraphInstance& z, double alpha) const {
    std::vector<int> zeros(support.size(), 0);
    std::vector<double> like(support.size(), 1.0);
    for (std::size_t i = 0; i < support.size(); ++i) {
      like[i] = support[i].p;
      for (std::size_t k = 0; k < kSlots; ++k) {
        const Label mask = static_cast<Label>(kRadix[k] - 1);
        const double f = z.slot(k) == mask ? 1 - alpha : (z.slot(k) == support[i].g.slot(k) ? alpha : 0.0);
        if (f == 0.0) {
          ++zeros[i];
        } else {
          like[i] *= f;
        }
      }
    }
    const int fewest = *std::min_element(zeros.begin(), zeros.end());
    std::vector<double> w(support.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < support.size(); ++i) {
      if (zeros[i] == fewest) {
        w[i] = like[i];
        total += like[i];
      }
    }
    for (double& v : w) v /= total;
    return oracle::slot_marginals(support, w, 4, 1, 2);
  }

  // Pushes `mass` along the product law `laws` into `next`.
  static void spread(const std::vector<std::vector<double>>& laws, double mass, std::vector<double>& next) {
    std::function<void(int, std::size_t, std::size_t, double)> walk = [&](int k, std::size_t index, std::size_t stride,
                                                                         double p) {
      if (k == kSlots) {
        next[index] += p;
        return;
      }
      for (int c = 0; c < kRadix[k]; ++c) {
        const double f = laws[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)];
        if (f > 0.0) walk(k + 1, index + static_cast<std::size_t>(c) * stride, stride * kRadix[k], p * f);
      }
    };
    walk(0, 0, 1, mass);
  }
};

Outcome end_to_end_recovery() {
  const MaskChain chain;
  const int T = 8;
  const ToyFamily fam = ToyFamily::triangle_free_4();
  const NoiseSpec spec = NoiseSpec::mask(fam.schema());
  const BayesOracle lib(fam, spec);

  std::vector<double> dist(MaskChain::kStates, 0.0);
  dist[MaskChain::kStates - 1] = 1.0;  // every slot MASK
  double worst_lib = 0.0;
  for (int step = 0; step < T; ++step) {
    const double at = cosine_keep(static_cast<double>(step) / T), as = cosine_keep(static_cast<double>(step + 1) / T);
    std::vector<double> next(MaskChain::kStates, 0.0);
    for (std::size_t s = 0; s < MaskChain::kStates; ++s) {
      if (dist[s] == 0.0) continue;
      const auto z = MaskChain::decode(s);
      const auto m = chain.marginals(z, at);
      std::vector<std::vector<double>> laws(MaskChain::kSlots);
      for (int k = 0; k < MaskChain::kSlots; ++k) {
        auto& law = laws[static_cast<std::size_t>(k)];
        law.assign(static_cast<std::size_t>(MaskChain::kRadix[k]), 0.0);
        for (std::size_t c = 0; c < m[k].size(); ++c) law[c] = as * m[k][c];
        law.back() += 1 - as;
      }
      // the library's oracle and step law must agree with this one
      const auto lib_law = sid_step_law(z, lib.predict(z, at), as, spec);
      for (int k = 0; k < MaskChain::kSlots; ++k) worst_lib = std::max(worst_lib, tv(as_vec(lib_law[k]), laws[k]));
      MaskChain::spread(laws, dist[s], next);
    }
    dist = std::move(next);
  }

  std::map<GraphInstance, double> exact;
  double residue = 0.0;
  for (std::size_t s = 0; s < MaskChain::kStates; ++s) {
    if (dist[s] == 0.0) continue;
    const auto g = MaskChain::decode(s);
    bool clean = true;
    for (std::size_t k = 0; k < g.slot_count(); ++k) clean = clean && g.slot(k) < spec.clean_vocab(g.is_node_slot(k));
    if (clean) {
      exact[g] += dist[s];
    } else {
      residue += dist[s];
    }
  }
  std::map<GraphInstance, double> family;
  for (const auto& w : chain.support) family[w.g] = w.p;
  double tv_family = 0.0;
  for (unsigned mask = 0; mask < 64; ++mask) {
    const auto g = oracle::k4_graph(mask);
    tv_family += std::abs((exact.count(g) ? exact[g] : 0.0) - (family.count(g) ? family[g] : 0.0));
  }
  tv_family *= 0.5;
  double invalid = 0.0;
  for (const auto& [g, p] : exact)
    if (!family.count(g)) invalid += p;

  // Monte Carlo through the library sampler, against the exact law
  SamplerSpec sspec;
  sspec.kind = SamplerKind::kSid;
  sspec.T = T;
  sspec.noise = spec;
  const std::size_t chains = 100000;
  const auto samples = generate(lib, sspec, chains, SizeSampler::fixed(4), RngStream(8, 8));
  std::map<GraphInstance, double> freq;
  for (const auto& g : samples) freq[g] += 1.0 / static_cast<double>(chains);
  double tv_mc = 0.0;
  for (unsigned mask = 0; mask < 64; ++mask) {
    const auto g = oracle::k4_graph(mask);
    tv_mc += std::abs((freq.count(g) ? freq[g] : 0.0) - (exact.count(g) ? exact[g] : 0.0));
  }
  tv_mc *= 0.5;

  const bool pass = tv_family < 0.02 && worst_lib < 1e-12 && residue < 1e-12 && tv_mc < 0.02;
  return {pass, "exact_tv=" + fmt("%.4f", tv_family) + " invalid_mass=" + fmt("%.4f", invalid) +
                    " mc_vs_exact_tv=" + fmt("%.4f", tv_mc) + " (" + std::to_string(chains) + " chains)" +
                    " lib_law_err=" + fmt("%.1e", worst_lib)};
}

// ---------------------------------------------------------------------------------------------
// 9. Validity ordering on the toy molecule family with one trained denoiser.

Outcome validity_ordering() {
  const auto cfg = load_config(config_path("toy_molecule_ablation.json"));
  const auto data = build_dataset(cfg);
  const auto models = train_models(cfg, data);
  const auto rows = run_ablation(cfg, data, models);
  std::map<std::pair<std::string, int>, double> v;
  for (const auto& r : rows) v[{r.sampler, r.nfe}] = r.validity;
  auto at = [&](const char* s, int t) {
    const auto it = v.find({s, t});
    if (it == v.end()) throw Error(ErrorKind::kConfigParse, std::string("ablation config lacks ") + s + "@" + std::to_string(t));
    return it->second;
  };
  bool pass = true;
  std::string detail;
  for (int t : {16, 64}) {
    pass = pass && at("cid", t) >= at("sid", t) && at("sid", t) > at("ddm_exact", t);
    detail += "T=" + std::to_string(t) + " cid=" + fmt("%.3f", at("cid", t)) + " sid=" + fmt("%.3f", at("sid", t)) +
              " ddm=" + fmt("%.3f", at("ddm_exact", t)) + "; ";
  }
  pass = pass && at("sid", 16) <= at("sid", 64) && at("sid", 64) <= at("sid", 256);
  detail += "sid@256=" + fmt("%.3f", at("sid", 256)) + " samples=" + std::to_string(cfg.samples);
  return {pass, detail};
}

// ---------------------------------------------------------------------------------------------
// 10. Two runs of the same config produce identical files.

Outcome determinism() {
  const auto cfg = load_config(config_path("smoke.json"));
  const auto root = std::filesystem::temp_directory_path() / "sidlab_acceptance_determinism";
  std::filesystem::remove_all(root);
  std::vector<std::string> names{"dataset.jsonl", "denoiser.json", "critic.json", "ablation.csv"};
  for (const char* run : {"a", "b"}) {
    const auto dir = root / run;
    std::filesystem::create_directories(dir);
    const auto data = build_dataset(cfg);
    const auto models = train_models(cfg, data);
    save_graphs((dir / names[0]).string(), data);
    save_denoiser((dir / names[1]).string(), dynamic_cast<const TrainableDenoiser&>(*models.denoiser));
    save_critic((dir / names[2]).string(), *models.critic);
    write_text_file((dir / names[3]).string(), format_csv(run_ablation(cfg, data, models)));
  }
  int same = 0;
  for (const auto& n : names) same += read_text_file((root / "a" / n).string()) == read_text_file((root / "b" / n).string());
  std::filesystem::remove_all(root);
  return {same == static_cast<int>(names.size()),
          std::to_string(same) + "/" + std::to_string(names.size()) + " files byte-identical"};
}

}  // namespace

// Optional arguments select criteria by number, e.g. `sidlab_acceptance 4 8`.
int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  int failures = 0, ran = 0;
  auto run = [&](int id, const char* name, double limit_s, const std::function<Outcome()>& fn) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) return;
    ++ran;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > limit_s) {
      o.pass = false;
      o.detail += " [over the " + fmt("%.0f", limit_s) + " s budget]";
    }
    std::printf("%s  criterion %d: %s  (%s; %.2f s)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  };

  const ProbeSet probes = make_probes();
  run(1, "forward-process equivalence", 1, forward_equivalence);
  run(2, "two-stage SID step law", 10, [&] { return sid_law(probes); });
  run(3, "maximal corrector equals SID", 10, [&] { return corrector_law(probes); });
  run(4, "trained critic matches the optimal critic", 120, optimal_critic_recovery);
  run(5, "mask collapse of the Bayes posterior", 10, [&] { return mask_collapse(probes); });
  run(6, "MPNN denoiser and critic gradients", 60, gradient_check);
  run(7, "MPNN permutation equivariance", 10, equivariance);
  run(8, "Bayes-oracle SID recovers the triangle-free family", 300, end_to_end_recovery);
  run(9, "validity ordering CID >= SID > DDM", 1800, validity_ordering);
  run(10, "determinism of datasets, models and CSV", 600, determinism);
  std::printf("%d of %d criteria failed\n", failures, ran);
  return failures == 0 ? 0 : 1;
}
