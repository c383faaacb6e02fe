#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "sidlab/prob.hpp"

namespace sidlab {

using Label = int;

/// Label vocabularies. Edge label 0 is always "no edge". When has_mask is set a
/// MASK label is appended as the last index of both vocabularies.
struct GraphSchema {
  int d_x = 1;
  int d_e = 2;
  bool has_mask = false;
  int n_min = 1;
  int n_max = 1;

  static constexpr Label kNoEdge = 0;

  int node_vocab() const noexcept { return d_x + (has_mask ? 1 : 0); }
  int edge_vocab() const noexcept { return d_e + (has_mask ? 1 : 0); }
  Label node_mask() const noexcept { return d_x; }
  Label edge_mask() const noexcept { return d_e; }
  GraphSchema with_mask(bool mask) const {
    GraphSchema s = *this;
    s.has_mask = mask;
    return s;
  }

  void validate() const;
  bool operator==(const GraphSchema&) const = default;
};

/// Node labels plus the upper-triangular edge slots, row-major (0,1),(0,2),...,(n-2,n-1).
/// The symmetric matrix view mirrors the upper triangle and has a no-edge diagonal.
///
/// Element slots are indexed 0..n-1 for nodes followed by n..n+m-1 for edges.
class GraphInstance {
 public:
  GraphInstance() = default;
  explicit GraphInstance(int n, Label node_fill = 0, Label edge_fill = GraphSchema::kNoEdge);
  GraphInstance(std::vector<Label> nodes, std::vector<Label> e_upper);

  int n() const noexcept { return static_cast<int>(nodes_.size()); }
  std::size_t edge_slots() const noexcept { return edges_.size(); }
  std::size_t slot_count() const noexcept { return nodes_.size() + edges_.size(); }
  bool is_node_slot(std::size_t k) const noexcept { return k < nodes_.size(); }

  Label node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  void set_node(int i, Label v) { nodes_[static_cast<std::size_t>(i)] = v; }
  Label edge(int i, int j) const;
  void set_edge(int i, int j, Label v);
  Label slot(std::size_t k) const;
  void set_slot(std::size_t k, Label v);

  std::span<const Label> nodes() const noexcept { return nodes_; }
  std::span<const Label> e_upper() const noexcept { return edges_; }

  std::vector<std::vector<Label>> edge_matrix() const;

  /// Node i of this graph becomes node perm[i] of the result.
  GraphInstance permuted(std::span<const int> perm) const;

  static std::size_t edge_index(int n, int i, int j);
  static std::pair<int, int> edge_endpoints(int n, std::size_t index);

  bool operator==(const GraphInstance&) const = default;
  auto operator<=>(const GraphInstance&) const = default;

 private:
  std::vector<Label> nodes_;
  std::vector<Label> edges_;
};

/// Per-element corruption indicators in the same slot layout as GraphInstance:
/// 1 = kept from the clean instance, 0 = replaced by noise.
class CorruptionMask {
 public:
  CorruptionMask() = default;
  CorruptionMask(int n, bool value);

  int n() const noexcept { return n_; }
  std::size_t slot_count() const noexcept { return flags_.size(); }
  bool slot(std::size_t k) const { return flags_[k] != 0; }
  void set_slot(std::size_t k, bool v) { flags_[k] = v ? 1 : 0; }
  bool node(int i) const { return slot(static_cast<std::size_t>(i)); }
  bool edge(int i, int j) const;
  std::span<const std::uint8_t> flags() const noexcept { return flags_; }
  bool all(bool value) const;

  bool operator==(const CorruptionMask&) const = default;

 private:
  int n_ = 0;
  std::vector<std::uint8_t> flags_;
};

/// (n, m) with m = n(n-1)/2 upper-triangular edge slots.
std::pair<int, int> element_count(const GraphInstance& g);
/// Node/edge loss weight n / (n + m).
double default_gamma(const GraphInstance& g);

enum class FamilyKind { kTriangleFree4, kToyMolecule };

FamilyKind parse_family_kind(std::string_view name);
std::string_view to_string(FamilyKind kind);

/// Desk-scale graph families with an analytic validity rule.
///
/// TRIANGLE_FREE_4: unlabeled graphs on exactly four nodes that are connected and
/// contain no 3-cycle. TOY_MOLECULE: node label k has valences[k], edge label k has
/// bond order bond_orders[k]; valid graphs are connected and every node's incident
/// bond orders sum exactly to its valence.
struct ToyFamily {
  FamilyKind kind = FamilyKind::kTriangleFree4;
  std::vector<int> valences;
  std::vector<int> bond_orders;
  int n_min = 4;
  int n_max = 4;

  static ToyFamily triangle_free_4();
  /// Node labels A..D with valences 1..4, edge labels none/single/double.
  static ToyFamily toy_molecule(int n_min = 3, int n_max = 8);

  GraphSchema schema(bool with_mask = false) const;
  void validate() const;
};

struct WeightedGraph {
  GraphInstance graph;
  double probability = 0.0;
};

/// Every valid instance with its probability under the dataset law (size uniform
/// over [n_min, n_max], then uniform over the valid instances of that size).
/// Throws state-space-too-large above 10^6 candidate instances.
std::vector<WeightedGraph> enumerate_family(const ToyFamily& family);

bool is_connected(const GraphInstance& g);
/// Throws mask-label-present when g carries a MASK label.
bool is_valid(const GraphInstance& g, const ToyFamily& family);

/// Rejection sampler for uniform valid instances, deterministic given rng.
std::vector<GraphInstance> generate_dataset(const ToyFamily& family, std::size_t count,
                                            const RngStream& rng);

/// Degree = number of incident slots whose label is not no-edge.
std::vector<int> degrees(const GraphInstance& g);

}  // namespace sidlab
