#include "sidlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <tuple>

#include "sidlab/error.hpp"

namespace sidlab {

namespace {

// Colour refinement: start from node labels, then repeatedly append the sorted
// multiset of (edge label, neighbour colour). Colours are isomorphism invariant.
std::vector<int> refine_colours(const GraphInstance& g, int rounds) {
  const int n = g.n();
  std::vector<int> colour(g.nodes().begin(), g.nodes().end());
  for (int r = 0; r < rounds; ++r) {
    std::vector<std::vector<int>> sig(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      std::vector<std::pair<int, int>> nb;
      for (int j = 0; j < n; ++j) {
        if (j != i && g.edge(i, j) != GraphSchema::kNoEdge) nb.emplace_back(g.edge(i, j), colour[j]);
      }
      std::sort(nb.begin(), nb.end());
      auto& s = sig[static_cast<std::size_t>(i)];
      s.push_back(colour[i]);
      for (auto [e, c] : nb) {
        s.push_back(e);
        s.push_back(c);
      }
    }
    std::vector<std::vector<int>> uniq = sig;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    std::vector<int> next(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      next[i] = static_cast<int>(std::lower_bound(uniq.begin(), uniq.end(), sig[i]) - uniq.begin());
    }
    const bool stable = std::set<int>(next.begin(), next.end()).size() == std::set<int>(colour.begin(), colour.end()).size();
    colour = std::move(next);
    if (stable && r > 0) break;
  }
  return colour;
}

std::string encode(const GraphInstance& g, std::span<const int> order) {
  const int n = g.n();
  std::string s;
  s.reserve(static_cast<std::size_t>(n + n * (n - 1) / 2 + 1));
  s.push_back(static_cast<char>(n));
  for (int i = 0; i < n; ++i) s.push_back(static_cast<char>(g.node(order[i])));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) s.push_back(static_cast<char>(g.edge(order[i], order[j])));
  }
  return s;
}

}  // namespace

CanonicalForm canonical_form(const GraphInstance& g) {
  const int n = g.n();
  if (n > kExactCanonicalMaxN) {
    // Invariant hash: refined colour histogram plus the edge-label multiset.
    auto colour = refine_colours(g, n);
    std::vector<std::tuple<int, int, int>> edges;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (g.edge(i, j) == GraphSchema::kNoEdge) continue;
        edges.emplace_back(std::min(colour[i], colour[j]), std::max(colour[i], colour[j]), g.edge(i, j));
      }
    }
    std::sort(colour.begin(), colour.end());
    std::sort(edges.begin(), edges.end());
    std::string key = "~" + std::to_string(n) + "|";
    for (int c : colour) key += std::to_string(c) + ",";
    key += "|";
    for (auto [a, b, e] : edges) key += std::to_string(a) + "-" + std::to_string(b) + ":" + std::to_string(e) + ",";
    return {key, false};
  }

  const auto colour = refine_colours(g, n);
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return colour[a] < colour[b]; });
  // Blocks of equal colour; every permutation inside the blocks is tried.
  std::vector<std::pair<int, int>> blocks;
  for (int i = 0; i < n;) {
    int j = i;
    while (j < n && colour[order[j]] == colour[order[i]]) ++j;
    blocks.emplace_back(i, j);
    std::sort(order.begin() + i, order.begin() + j);
    i = j;
  }
  std::string best;
  bool have = false;
  std::function<void(std::size_t)> rec = [&](std::size_t b) {
    if (b == blocks.size()) {
      std::string code = encode(g, order);
      if (!have || code < best) {
        best = std::move(code);
        have = true;
      }
      return;
    }
    const auto [lo, hi] = blocks[b];
    do {
      rec(b + 1);
    } while (std::next_permutation(order.begin() + lo, order.begin() + hi));
  };
  rec(0);
  if (!have) best = encode(g, order);
  return {best, true};
}

double tv_distance(std::span<const double> h1, std::span<const double> h2) {
  const std::size_t k = std::max(h1.size(), h2.size());
  double s1 = 0.0, s2 = 0.0;
  for (double v : h1) s1 += v;
  for (double v : h2) s2 += v;
  if (!(s1 > 0.0) || !(s2 > 0.0)) throw Error(ErrorKind::kInvalidDistribution, "histogram with no mass");
  double d = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double a = i < h1.size() ? h1[i] / s1 : 0.0;
    const double b = i < h2.size() ? h2[i] / s2 : 0.0;
    d += std::abs(a - b);
  }
  return 0.5 * d;
}

std::vector<double> degree_histogram(std::span<const GraphInstance> graphs, int max_degree) {
  std::vector<double> h(static_cast<std::size_t>(max_degree) + 1, 0.0);
  double total = 0.0;
  for (const auto& g : graphs) {
    for (int d : degrees(g)) {
      h[static_cast<std::size_t>(std::min(d, max_degree))] += 1.0;
      total += 1.0;
    }
  }
  if (total > 0.0) {
    for (double& v : h) v /= total;
  }
  return h;
}

MetricsRow evaluate_batch(std::span<const GraphInstance> samples, std::span<const GraphInstance> dataset,
                          const ToyFamily& family) {
  if (samples.empty()) throw Error(ErrorKind::kDomain, "cannot evaluate an empty batch");
  MetricsRow row;
  std::size_t valid = 0;
  std::set<std::string> distinct;
  for (const auto& g : samples) {
    if (is_valid(g, family)) ++valid;
    const auto cf = canonical_form(g);
    row.approximate = row.approximate || !cf.exact;
    distinct.insert(cf.key);
  }
  std::set<std::string> train;
  for (const auto& g : dataset) {
    const auto cf = canonical_form(g);
    row.approximate = row.approximate || !cf.exact;
    train.insert(cf.key);
  }
  std::size_t novel = 0;
  for (const auto& key : distinct) {
    if (!train.count(key)) ++novel;
  }
  const auto count = static_cast<double>(samples.size());
  row.validity = static_cast<double>(valid) / count;
  row.unique = static_cast<double>(distinct.size()) / count;
  row.novel = static_cast<double>(novel) / static_cast<double>(distinct.size());

  int max_degree = 0;
  for (const auto& g : samples) max_degree = std::max(max_degree, g.n());
  for (const auto& g : dataset) max_degree = std::max(max_degree, g.n());
  const auto hs = degree_histogram(samples, max_degree);
  if (dataset.empty()) {
    row.degree_tv = 0.0;
  } else {
    const auto hd = degree_histogram(dataset, max_degree);
    row.degree_tv = tv_distance(hs, hd);
  }
  return row;
}

std::string csv_header() { return "sampler,nfe,validity,unique,novel,degree_tv,seed\n"; }

std::string csv_row(const MetricsRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f,%.6f,%.6f,%llu\n", row.sampler.c_str(), row.nfe, row.validity,
                row.unique, row.novel, row.degree_tv, static_cast<unsigned long long>(row.seed));
  return buf;
}

}  // namespace sidlab
