#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "sidlab/critic.hpp"
#include "sidlab/error.hpp"
#include "sidlab/samplers.hpp"

using namespace sidlab;

namespace {

// Residual fixed to one value everywhere.
class ConstantCritic final : public Critic {
 public:
  ConstantCritic(const GraphSchema& s, double v) : schema_(s.with_mask(false)), v_(v) {}
  CriticKind kind() const override { return CriticKind::kZero; }
  const GraphSchema& schema() const override { return schema_; }
  std::vector<double> residual(const GraphInstance& z, double) const override {
    return std::vector<double>(z.slot_count(), v_);
  }

 private:
  GraphSchema schema_;
  double v_;
};

std::vector<CriticExample> random_examples(const GraphSchema& s, int n, int count, RngStream rng) {
  std::vector<CriticExample> out;
  for (int i = 0; i < count; ++i) {
    RngStream r = rng.split(static_cast<std::uint64_t>(i));
    CriticExample ex{oracle::random_graph(n, s.d_x, s.d_e, r), CorruptionMask(n, true), r.uniform()};
    for (std::size_t k = 0; k < ex.labels.slot_count(); ++k) ex.labels.set_slot(k, r.bernoulli(0.5));
    out.push_back(std::move(ex));
  }
  return out;
}

double critic_loss(const TrainableCritic& c, const std::vector<CriticExample>& batch) {
  std::vector<double> scratch(c.params().size(), 0.0);
  double loss = 0.0;
  for (const auto& ex : batch) loss += c.accumulate_gradient(ex, scratch);
  return loss;
}

double worst_fd_error(TrainableCritic& c, const std::vector<CriticExample>& batch) {
  std::vector<double> grad(c.params().size(), 0.0);
  for (const auto& ex : batch) c.accumulate_gradient(ex, grad);
  auto params = c.mutable_params();
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = critic_loss(c, batch);
    params[i] = keep - h;
    const double down = critic_loss(c, batch);
    params[i] = keep;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-6}));
  }
  return worst;
}

}  // namespace

TEST_CASE("critic forward") {
  const GraphSchema s = ToyFamily::toy_molecule().schema();
  const ZeroCritic zero(s);
  const GraphInstance g({0, 1, 0}, {1, 0, 1});
  for (double a : {0.0, 1e-6, 0.1, 0.5, 0.77, 1.0 - 1e-6, 1.0}) {
    for (double v : critic_forward(zero, g, a).alpha_hat) CHECK(v == clamp_alpha(a));
  }
  for (double v : critic_forward(zero, g, 0.3).alpha_hat) CHECK(v == 0.3);
  CHECK(critic_forward(zero, g, 1e-6).alpha_hat[0] == 1e-6);
  const ConstantCritic pos(s, 0.7), neg(s, -1.3);
  for (const Critic* c : {static_cast<const Critic*>(&pos), static_cast<const Critic*>(&neg)}) {
    double prev = 0.0;
    for (int i = 1; i < 100; ++i) {
      const double v = critic_forward(*c, g, i / 100.0).alpha_hat[0];
      CHECK(v > prev);
      CHECK(v > 0.0);
      CHECK(v < 1.0);
      prev = v;
    }
  }
  CHECK(parse_critic_kind("tabular") == CriticKind::kTabular);
  CHECK_THROWS_AS(parse_critic_kind("gan"), Error);
}

TEST_CASE("optimal critic closed form") {
  for (int i = 0; i <= 10; ++i) CHECK(optimal_critic(0.4, 0.4, i / 10.0) == doctest::Approx(i / 10.0).epsilon(1e-15));
  CHECK(optimal_critic(0.8, 0.5, 0.5) == doctest::Approx(0.6154).epsilon(1e-4));
  CHECK(std::abs(optimal_critic(0.8, 0.5, 0.5) - 0.6154) < 1e-4);
  CHECK(optimal_critic(0.0, 0.5, 0.5) == 0.0);
  CHECK(optimal_critic(0.5, 0.0, 0.5) == 1.0);
  try {
    optimal_critic(0.0, 0.0, 0.5);
    FAIL("expected undefined-critic");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kUndefinedCritic);
  }
  CHECK_THROWS_AS(optimal_critic(-0.1, 0.5, 0.5), Error);
  // odds ratio identity and sign condition over a sweep
  for (int i = 1; i < 20; ++i) {
    for (int j = 1; j < 20; ++j) {
      const double pd = i / 20.0, pp = j / 20.0, a = 0.35;
      const double c = optimal_critic(pd, pp, a);
      CHECK((1 / a - 1) / (1 / c - 1) == doctest::Approx(pd / pp).epsilon(1e-12));
      if (pd > pp) CHECK(c > a);
      if (pd < pp) CHECK(c < a);
    }
  }
}

TEST_CASE("critic training examples") {
  const ToyFamily fam = ToyFamily::toy_molecule(3, 3);
  const auto spec = NoiseSpec::mask(fam.schema());
  const GraphInstance g({0, 1, 0}, {1, 0, 1});
  const BayesOracle single(std::vector<WeightedGraph>{{g, 1.0}}, spec);
  const BayesOracle full(fam, spec);
  const Schedule sched;
  for (int i = 0; i < 100; ++i) {
    const auto ex1 = make_critic_training_example(g, 1.0, sched, spec, full, RngStream(1, static_cast<std::uint64_t>(i)));
    CHECK(ex1.z_hat == g);
    CHECK(ex1.labels.all(true));
    const auto ex0 = make_critic_training_example(g, 0.0, sched, spec, single, RngStream(2, static_cast<std::uint64_t>(i)));
    CHECK(ex0.labels.all(false));
    CHECK(ex0.z_hat == g);  // every slot drawn from a point-mass denoiser
    const auto exf = make_critic_training_example(g, 0.0, sched, spec, full, RngStream(3, static_cast<std::uint64_t>(i)));
    for (std::size_t k = 0; k < exf.z_hat.slot_count(); ++k) CHECK(exf.z_hat.slot(k) < spec.clean_vocab(exf.z_hat.is_node_slot(k)));
  }
  double kept = 0, total = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto ex = make_critic_training_example(g, 0.5, sched, spec, full, RngStream(4, static_cast<std::uint64_t>(i)));
    for (std::size_t k = 0; k < ex.labels.slot_count(); ++k) {
      kept += ex.labels.slot(k);
      total += 1;
    }
  }
  const double a = sched.alpha(0.5);
  CHECK(std::abs(kept / total - a) < 3 * std::sqrt(a * (1 - a) / total));
  CHECK_THROWS_AS(make_critic_training_example(g, 0.5, sched, NoiseSpec::uniform(fam.schema()), full, RngStream(1, 1)),
                  Error);
}

TEST_CASE("critical denoising step") {
  const ToyFamily fam = ToyFamily::triangle_free_4();
  const auto spec = NoiseSpec::mask(fam.schema());
  const BayesOracle oracle(fam, spec);
  const Schedule sched;
  const ConstantCritic remask(fam.schema(), -40.0), never(fam.schema(), 1e3);
  const ZeroCritic zero(fam.schema());
  RngStream rng(5, 5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto& g = oracle.support()[static_cast<std::size_t>(rng.uniform_int(0, 18))].graph;
    auto [z, a] = noise_graph(g, rng.uniform(), sched, spec, rng.split(static_cast<std::uint64_t>(trial)));
    const RngStream step = rng.split(1000 + static_cast<std::uint64_t>(trial));
    // s = 1 ignores the critic
    auto [z1, a1] = cid_step(z, a, oracle, remask, 0.5, 1.0, sched, spec, step);
    CHECK(a1.all(true));
    const auto filled = fact_denoise(z, a, oracle.predict(z, sched.alpha(0.5)), step.split(0));
    CHECK(z1 == filled);
    // a keep probability of exactly one never re-masks
    auto [zn, an] = cid_step(z, a, oracle, never, 0.25, 0.375, sched, spec, step);
    CHECK(an.all(true));
    for (std::size_t k = 0; k < zn.slot_count(); ++k) CHECK(zn.slot(k) < spec.clean_vocab(zn.is_node_slot(k)));
  }
  // zero critic: the per-slot law is mask SID's law
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto& g = oracle.support()[static_cast<std::size_t>(rng.uniform_int(0, 18))].graph;
    const int step = static_cast<int>(rng.uniform_int(0, 7));
    auto [z, a] = noise_graph(g, step / 8.0, sched, spec, rng.split(2000 + static_cast<std::uint64_t>(trial)));
    const double at = sched.alpha(step / 8.0), as = sched.alpha((step + 1) / 8.0);
    const auto pred = oracle.predict(z, at);
    const auto cid = cid_step_law(z, a, pred, zero, at, as, spec);
    const auto sid = sid_step_law(z, pred, as, spec);
    for (std::size_t k = 0; k < cid.size(); ++k) worst = std::max(worst, total_variation(cid[k], sid[k]));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("cid_step draws from cid_step_law") {
  const ToyFamily fam = ToyFamily::triangle_free_4();
  const auto spec = NoiseSpec::mask(fam.schema());
  const BayesOracle oracle(fam, spec);
  const Schedule sched;
  TabularCritic critic(fam.schema(), 4, {0.5});
  RngStream init(6, 6);
  for (double& p : critic.mutable_params()) p = 2 * init.uniform() - 1;
  const auto& g = oracle.support()[3].graph;
  auto [z, a] = noise_graph(g, 0.5, sched, spec, RngStream(7, 7));
  const double at = sched.alpha(0.5), as = sched.alpha(0.625);
  const auto law = cid_step_law(z, a, oracle.predict(z, at), critic, at, as, spec);
  const int draws = 100000;
  std::vector<std::vector<double>> h(z.slot_count());
  for (std::size_t k = 0; k < h.size(); ++k) h[k].assign(law[k].size(), 0.0);
  for (int d = 0; d < draws; ++d) {
    auto [zs, as_mask] = cid_step(z, a, oracle, critic, 0.5, 0.625, sched, spec, RngStream(8, static_cast<std::uint64_t>(d)));
    for (std::size_t k = 0; k < h.size(); ++k) {
      h[k][static_cast<std::size_t>(zs.slot(k))] += 1.0 / draws;
      CHECK((zs.slot(k) >= spec.clean_vocab(zs.is_node_slot(k))) == !as_mask.slot(k));
    }
  }
  for (std::size_t k = 0; k < h.size(); ++k)
    CHECK(total_variation(h[k], std::vector<double>(law[k].probs().begin(), law[k].probs().end())) < 0.01);
}

TEST_CASE("critic gradients match finite differences") {
  const GraphSchema s = ToyFamily::toy_molecule(2, 4).schema();
  TabularCritic tab(s, 3, {0.2, 0.5, 0.8});
  RngStream r(9, 9);
  for (double& p : tab.mutable_params()) p = r.uniform() - 0.5;
  CHECK(worst_fd_error(tab, random_examples(s, 3, 6, RngStream(10, 10))) < 1e-4);

  MpnnCritic net(s, MpnnConfig{1, 8}, RngStream(11, 11));
  // the head starts at zero; give it weight so every parameter receives gradient
  for (double& p : net.mutable_params()) p += 0.3 * (r.uniform() - 0.5);
  std::vector<CriticExample> batch = random_examples(s, 3, 1, RngStream(12, 12));
  auto more = random_examples(s, 4, 1, RngStream(13, 13));
  batch.insert(batch.end(), more.begin(), more.end());
  const double worst = worst_fd_error(net, batch);
  MESSAGE("MPNN critic max relative error " << worst);
  CHECK(worst < 1e-4);
}

TEST_CASE("MPNN critic starts at the schedule and is equivariant") {
  const GraphSchema s = ToyFamily::toy_molecule().schema();
  MpnnCritic fresh(s, MpnnConfig{2, 16}, RngStream(14, 14));
  RngStream r(15, 15);
  const auto g = oracle::random_graph(6, 4, 3, r);
  for (double v : critic_forward(fresh, g, 0.42).alpha_hat) CHECK(v == 0.42);

  for (double& p : fresh.mutable_params()) p += 0.2 * (r.uniform() - 0.5);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const int n = static_cast<int>(r.uniform_int(2, 7));
    const auto z = oracle::random_graph(n, 4, 3, r);
    const auto f = fresh.residual(z, 0.6);
    for (int p = 0; p < 20; ++p) {
      const auto perm = oracle::random_permutation(n, r);
      const auto fp = fresh.residual(z.permuted(perm), 0.6);
      for (int i = 0; i < n; ++i) worst = std::max(worst, std::abs(f[i] - fp[perm[i]]));
      for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
          worst = std::max(worst, std::abs(f[n + GraphInstance::edge_index(n, i, j)] -
                                           fp[n + GraphInstance::edge_index(n, perm[i], perm[j])]));
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("tabular critic bookkeeping") {
  const GraphSchema s = ToyFamily::toy_molecule(2, 3).schema();
  TabularCritic c(s, 3, {0.75, 0.25});
  CHECK(c.alpha_grid().front() == 0.25);
  CHECK(c.state_count() == 64 * 27);
  CHECK(c.alpha_bucket(0.1) == 0);
  CHECK(c.alpha_bucket(0.6) == 1);
  GraphInstance masked({0, 4, 0}, {1, 0, 1});
  try {
    c.state_index(masked);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kMaskLabelPresent);
  }
  CHECK_THROWS_AS(c.state_index(GraphInstance(4)), Error);
  CHECK_THROWS_AS(TabularCritic(ToyFamily::toy_molecule().schema(), 8, {0.5}), Error);

  // Newton fit reproduces the empirical keep rate of every observed cell
  const auto examples = random_examples(s, 3, 5000, RngStream(16, 16));
  const auto counts = collect_cell_counts(c, examples);
  fit_tabular_critic(c, counts);
  std::size_t checked = 0;
  for (std::size_t cell = 0; cell < counts.total.size(); ++cell) {
    if (counts.total[cell] == 0 || counts.kept[cell] == 0 || counts.kept[cell] == counts.total[cell]) continue;
    const double alpha = c.alpha_grid()[cell % 2];
    const double fitted = sigmoid(c.params()[cell] + logit(alpha));
    CHECK(std::abs(fitted - counts.kept[cell] / counts.total[cell]) < 1e-9);
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("minibatch critic training approaches the optimal critic") {
  // Two graphs on two nodes; the denoiser is deliberately wrong about the edge.
  GraphSchema s;
  s.d_x = 1;
  s.d_e = 2;
  s.n_min = s.n_max = 2;
  const GraphInstance on({0, 0}, {1}), off({0, 0}, {0});
  const auto spec = NoiseSpec::mask(s);
  const BayesOracle skewed(std::vector<WeightedGraph>{{on, 0.2}, {off, 0.8}}, spec);
  std::vector<GraphInstance> data;
  for (int i = 0; i < 700; ++i) data.push_back(on);
  for (int i = 0; i < 300; ++i) data.push_back(off);
  TabularCritic c(s, 2, {0.5});
  CriticTrainConfig cfg;
  cfg.t_grid = {0.5};
  cfg.train.epochs = 150;
  cfg.train.optimizer.kind = OptimizerKind::kAdam;
  cfg.train.optimizer.lr = 0.005;
  train_critic(data, skewed, c, cfg, Schedule(), spec, RngStream(17, 17));
  // Edge slot: data says on with 0.7, the denoiser fills on with 0.2; node slots carry no signal.
  // p_data(on) = 0.7, p_pred(on) = 0.2 marginally for the edge slot.
  const double a = 0.5;
  const double expect_on = optimal_critic(0.7, 0.2, a), expect_off = optimal_critic(0.3, 0.8, a);
  const double got_on = critic_forward(c, on, a).alpha_hat[2];
  const double got_off = critic_forward(c, off, a).alpha_hat[2];
  MESSAGE("on " << got_on << " vs " << expect_on << ", off " << got_off << " vs " << expect_off);
  CHECK(std::abs(got_on - expect_on) < 0.03);
  CHECK(std::abs(got_off - expect_off) < 0.03);
}
