#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sidlab/graph.hpp"

namespace sidlab {

/// Isomorphism-class key. Exact (a true canonical labeling) for n <= kExactCanonicalMaxN;
/// above that a Weisfeiler-Lehman style invariant that can merge non-isomorphic graphs.
struct CanonicalForm {
  std::string key;
  bool exact = true;

  bool operator==(const CanonicalForm&) const = default;
};

inline constexpr int kExactCanonicalMaxN = 8;

/// Lexicographically smallest (node labels, upper-triangle edges) string over all
/// relabelings that keep nodes sorted by an isomorphism-invariant colour.
CanonicalForm canonical_form(const GraphInstance& g);

double tv_distance(std::span<const double> h1, std::span<const double> h2);

/// Normalized node-degree histogram over a batch, indexed by degree 0..max_degree.
std::vector<double> degree_histogram(std::span<const GraphInstance> graphs, int max_degree);

struct MetricsRow {
  std::string sampler;
  int nfe = 0;
  double validity = 0.0;
  double unique = 0.0;
  double novel = 0.0;
  double degree_tv = 0.0;
  std::uint64_t seed = 0;
  bool approximate = false;  // some canonical forms came from the invariant hash
};

/// Validity, uniqueness (distinct canonical forms / count), novelty (share of the
/// distinct samples absent from the dataset) and degree-histogram TV.
MetricsRow evaluate_batch(std::span<const GraphInstance> samples, std::span<const GraphInstance> dataset,
                          const ToyFamily& family);

std::string csv_header();
std::string csv_row(const MetricsRow& row);

}  // namespace sidlab
