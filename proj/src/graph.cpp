#include "sidlab/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sidlab/error.hpp"

namespace sidlab {

void GraphSchema::validate() const {
  if (d_x < 1) throw Error(ErrorKind::kDomain, "d_x must be >= 1");
  if (d_e < 2) throw Error(ErrorKind::kDomain, "d_e must be >= 2 (no-edge is a label)");
  if (n_min < 1 || n_max < n_min) throw Error(ErrorKind::kDomain, "bad graph-size bounds");
}

GraphInstance::GraphInstance(int n, Label node_fill, Label edge_fill) {
  if (n < 0) throw Error(ErrorKind::kDomain, "negative node count");
  nodes_.assign(static_cast<std::size_t>(n), node_fill);
  edges_.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n - (n > 0 ? 1 : 0)) / 2,
                edge_fill);
}

GraphInstance::GraphInstance(std::vector<Label> nodes, std::vector<Label> e_upper)
    : nodes_(std::move(nodes)), edges_(std::move(e_upper)) {
  const std::size_t n = nodes_.size();
  if (edges_.size() != (n == 0 ? 0 : n * (n - 1) / 2)) {
    throw Error(ErrorKind::kDimensionMismatch, "edge slot count does not match n(n-1)/2");
  }
}

std::size_t GraphInstance::edge_index(int n, int i, int j) {
  if (i > j) std::swap(i, j);
  const auto ui = static_cast<std::size_t>(i);
  const auto un = static_cast<std::size_t>(n);
  return ui * (2 * un - ui - 1) / 2 + static_cast<std::size_t>(j - i - 1);
}

std::pair<int, int> GraphInstance::edge_endpoints(int n, std::size_t index) {
  int i = 0;
  std::size_t row = static_cast<std::size_t>(n - 1);
  while (index >= row) {
    index -= row;
    ++i;
    --row;
  }
  return {i, i + 1 + static_cast<int>(index)};
}

Label GraphInstance::edge(int i, int j) const {
  if (i == j) return GraphSchema::kNoEdge;
  return edges_[edge_index(n(), i, j)];
}

void GraphInstance::set_edge(int i, int j, Label v) {
  if (i == j) throw Error(ErrorKind::kDomain, "diagonal entries are fixed to no-edge");
  edges_[edge_index(n(), i, j)] = v;
}

Label GraphInstance::slot(std::size_t k) const {
  return k < nodes_.size() ? nodes_[k] : edges_[k - nodes_.size()];
}

void GraphInstance::set_slot(std::size_t k, Label v) {
  if (k < nodes_.size()) {
    nodes_[k] = v;
  } else {
    edges_[k - nodes_.size()] = v;
  }
}

std::vector<std::vector<Label>> GraphInstance::edge_matrix() const {
  const int nn = n();
  std::vector<std::vector<Label>> m(static_cast<std::size_t>(nn),
                                    std::vector<Label>(static_cast<std::size_t>(nn), GraphSchema::kNoEdge));
  for (int i = 0; i < nn; ++i) {
    for (int j = i + 1; j < nn; ++j) {
      m[i][j] = m[j][i] = edge(i, j);
    }
  }
  return m;
}

GraphInstance GraphInstance::permuted(std::span<const int> perm) const {
  const int nn = n();
  if (static_cast<int>(perm.size()) != nn) throw Error(ErrorKind::kDimensionMismatch, "permutation size");
  GraphInstance out(nn);
  for (int i = 0; i < nn; ++i) out.set_node(perm[i], node(i));
  for (int i = 0; i < nn; ++i) {
    for (int j = i + 1; j < nn; ++j) out.set_edge(perm[i], perm[j], edge(i, j));
  }
  return out;
}

CorruptionMask::CorruptionMask(int n, bool value)
    : n_(n), flags_(static_cast<std::size_t>(n) + static_cast<std::size_t>(n) * (n > 0 ? n - 1 : 0) / 2,
                    value ? 1 : 0) {}

bool CorruptionMask::edge(int i, int j) const {
  if (i == j) return true;
  return slot(static_cast<std::size_t>(n_) + GraphInstance::edge_index(n_, i, j));
}

bool CorruptionMask::all(bool value) const {
  return std::all_of(flags_.begin(), flags_.end(), [&](std::uint8_t f) { return (f != 0) == value; });
}

std::pair<int, int> element_count(const GraphInstance& g) {
  return {g.n(), static_cast<int>(g.edge_slots())};
}

double default_gamma(const GraphInstance& g) {
  const auto [n, m] = element_count(g);
  if (n + m == 0) return 1.0;
  return static_cast<double>(n) / static_cast<double>(n + m);
}

FamilyKind parse_family_kind(std::string_view name) {
  if (name == "triangle_free_4" || name == "TRIANGLE_FREE_4") return FamilyKind::kTriangleFree4;
  if (name == "toy_molecule" || name == "TOY_MOLECULE") return FamilyKind::kToyMolecule;
  throw Error(ErrorKind::kConfigParse, "unknown family '" + std::string(name) + "'");
}

std::string_view to_string(FamilyKind kind) {
  return kind == FamilyKind::kTriangleFree4 ? "triangle_free_4" : "toy_molecule";
}

ToyFamily ToyFamily::triangle_free_4() {
  ToyFamily f;
  f.kind = FamilyKind::kTriangleFree4;
  f.valences = {};
  f.bond_orders = {0, 1};
  f.n_min = f.n_max = 4;
  return f;
}

ToyFamily ToyFamily::toy_molecule(int n_min, int n_max) {
  ToyFamily f;
  f.kind = FamilyKind::kToyMolecule;
  f.valences = {1, 2, 3, 4};
  f.bond_orders = {0, 1, 2};
  f.n_min = n_min;
  f.n_max = n_max;
  return f;
}

GraphSchema ToyFamily::schema(bool with_mask) const {
  GraphSchema s;
  s.d_x = kind == FamilyKind::kTriangleFree4 ? 1 : static_cast<int>(valences.size());
  s.d_e = static_cast<int>(bond_orders.size());
  s.has_mask = with_mask;
  s.n_min = n_min;
  s.n_max = n_max;
  return s;
}

void ToyFamily::validate() const {
  if (kind == FamilyKind::kToyMolecule) {
    if (valences.empty()) throw Error(ErrorKind::kDomain, "toy molecule needs node valences");
    for (int v : valences) {
      if (v < 1) throw Error(ErrorKind::kDomain, "valences must be positive integers");
    }
    if (bond_orders.size() < 2 || bond_orders[0] != 0) {
      throw Error(ErrorKind::kDomain, "bond order of the no-edge label must be 0");
    }
  } else if (n_min != 4 || n_max != 4) {
    throw Error(ErrorKind::kDomain, "triangle_free_4 has exactly four nodes");
  }
  schema().validate();
}

bool is_connected(const GraphInstance& g) {
  const int n = g.n();
  if (n <= 1) return true;
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int count = 1;
  while (!stack.empty()) {
    const int u = stack.back();
    stack.pop_back();
    for (int v = 0; v < n; ++v) {
      if (!seen[v] && g.edge(u, v) != GraphSchema::kNoEdge) {
        seen[v] = 1;
        ++count;
        stack.push_back(v);
      }
    }
  }
  return count == n;
}

namespace {

void check_labels(const GraphInstance& g, const GraphSchema& schema) {
  for (Label x : g.nodes()) {
    if (x == schema.node_mask()) throw Error(ErrorKind::kMaskLabelPresent, "node carries MASK");
    if (x < 0 || x >= schema.d_x) throw Error(ErrorKind::kDomain, "node label out of vocabulary");
  }
  for (Label e : g.e_upper()) {
    if (e == schema.edge_mask()) throw Error(ErrorKind::kMaskLabelPresent, "edge carries MASK");
    if (e < 0 || e >= schema.d_e) throw Error(ErrorKind::kDomain, "edge label out of vocabulary");
  }
}

bool has_triangle(const GraphInstance& g) {
  const int n = g.n();
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      if (g.edge(a, b) == GraphSchema::kNoEdge) continue;
      for (int c = b + 1; c < n; ++c) {
        if (g.edge(a, c) != GraphSchema::kNoEdge && g.edge(b, c) != GraphSchema::kNoEdge) return true;
      }
    }
  }
  return false;
}

std::vector<int> bond_sums(const GraphInstance& g, const ToyFamily& family) {
  const int n = g.n();
  std::vector<int> sums(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const int order = family.bond_orders[static_cast<std::size_t>(g.edge(i, j))];
      sums[i] += order;
      sums[j] += order;
    }
  }
  return sums;
}

bool valid_unchecked(const GraphInstance& g, const ToyFamily& family) {
  if (g.n() < family.n_min || g.n() > family.n_max) return false;
  if (family.kind == FamilyKind::kTriangleFree4) return is_connected(g) && !has_triangle(g);
  const auto sums = bond_sums(g, family);
  for (int i = 0; i < g.n(); ++i) {
    if (sums[i] != family.valences[static_cast<std::size_t>(g.node(i))]) return false;
  }
  return is_connected(g);
}

// Odometer over all label assignments of the slots of an n-node graph.
bool next_assignment(GraphInstance& g, const GraphSchema& schema) {
  for (std::size_t k = 0; k < g.slot_count(); ++k) {
    const int vocab = g.is_node_slot(k) ? schema.d_x : schema.d_e;
    const Label v = g.slot(k) + 1;
    if (v < vocab) {
      g.set_slot(k, v);
      return true;
    }
    g.set_slot(k, 0);
  }
  return false;
}

constexpr double kMaxStateSpace = 1e6;

}  // namespace

bool is_valid(const GraphInstance& g, const ToyFamily& family) {
  check_labels(g, family.schema());
  return valid_unchecked(g, family);
}

std::vector<WeightedGraph> enumerate_family(const ToyFamily& family) {
  family.validate();
  const GraphSchema schema = family.schema();
  double states = 0.0;
  for (int n = family.n_min; n <= family.n_max; ++n) {
    states += std::pow(schema.d_x, n) * std::pow(schema.d_e, n * (n - 1) / 2);
  }
  if (states > kMaxStateSpace) {
    throw Error(ErrorKind::kStateSpaceTooLarge,
                "family has " + std::to_string(states) + " candidate instances (limit 1e6)");
  }
  const double sizes = family.n_max - family.n_min + 1;
  std::vector<WeightedGraph> out;
  for (int n = family.n_min; n <= family.n_max; ++n) {
    const std::size_t first = out.size();
    GraphInstance g(n);
    do {
      if (valid_unchecked(g, family)) out.push_back({g, 0.0});
    } while (next_assignment(g, schema));
    const std::size_t count = out.size() - first;
    for (std::size_t k = first; k < out.size(); ++k) out[k].probability = 1.0 / (sizes * count);
  }
  if (out.empty()) throw Error(ErrorKind::kDomain, "family has no valid instances");
  // Renormalize when some sizes have no valid instance.
  double total = 0.0;
  for (const auto& w : out) total += w.probability;
  for (auto& w : out) w.probability /= total;
  return out;
}

std::vector<GraphInstance> generate_dataset(const ToyFamily& family, std::size_t count,
                                            const RngStream& rng) {
  family.validate();
  if (count < 1) throw Error(ErrorKind::kDomain, "dataset count must be >= 1");
  const GraphSchema schema = family.schema();

  // For molecules the node labels are pinned by the bond sums, so proposing edges
  // and then a label uniformly among those with the matching valence (accepted with
  // probability multiplicity / max multiplicity) has the same law as proposing every
  // label uniformly and rejecting invalid graphs.
  std::vector<std::vector<Label>> labels_for_valence;
  std::size_t max_multiplicity = 1;
  if (family.kind == FamilyKind::kToyMolecule) {
    const int max_val = *std::max_element(family.valences.begin(), family.valences.end());
    labels_for_valence.resize(static_cast<std::size_t>(max_val) + 1);
    for (std::size_t k = 0; k < family.valences.size(); ++k) {
      labels_for_valence[static_cast<std::size_t>(family.valences[k])].push_back(static_cast<Label>(k));
    }
    for (const auto& v : labels_for_valence) max_multiplicity = std::max(max_multiplicity, v.size());
  }

  // Zero acceptances in 10^7 proposals puts the acceptance-rate estimate below 10^-6.
  constexpr std::uint64_t kMaxTries = 10'000'000;

  std::vector<GraphInstance> out;
  out.reserve(count);
  for (std::size_t idx = 0; idx < count; ++idx) {
    RngStream r = rng.split(idx);
    const int n = static_cast<int>(r.uniform_int(family.n_min, family.n_max));
    std::uint64_t tries = 0;
    for (;;) {
      ++tries;
      if (tries > kMaxTries) {
        throw Error(ErrorKind::kAcceptanceRateTooLow,
                    "no valid instance of size " + std::to_string(n) + " after " + std::to_string(tries) +
                        " proposals");
      }
      GraphInstance g(n);
      for (std::size_t e = 0; e < g.edge_slots(); ++e) {
        g.set_slot(static_cast<std::size_t>(n) + e, static_cast<Label>(r.uniform_int(0, schema.d_e - 1)));
      }
      if (family.kind == FamilyKind::kTriangleFree4) {
        for (int i = 0; i < n; ++i) g.set_node(i, static_cast<Label>(r.uniform_int(0, schema.d_x - 1)));
        if (valid_unchecked(g, family)) {
          out.push_back(std::move(g));
          break;
        }
        continue;
      }
      const auto sums = bond_sums(g, family);
      bool ok = true;
      for (int i = 0; i < n && ok; ++i) {
        const auto s = static_cast<std::size_t>(sums[i]);
        if (s >= labels_for_valence.size() || labels_for_valence[s].empty()) ok = false;
      }
      if (!ok || !is_connected(g)) continue;
      for (int i = 0; i < n && ok; ++i) {
        const auto& options = labels_for_valence[static_cast<std::size_t>(sums[i])];
        if (options.size() < max_multiplicity &&
            !r.bernoulli(static_cast<double>(options.size()) / static_cast<double>(max_multiplicity))) {
          ok = false;
          break;
        }
        g.set_node(i, options[static_cast<std::size_t>(r.uniform_int(0, static_cast<std::int64_t>(options.size()) - 1))]);
      }
      if (ok) {
        out.push_back(std::move(g));
        break;
      }
    }
  }
  return out;
}

std::vector<int> degrees(const GraphInstance& g) {
  std::vector<int> d(static_cast<std::size_t>(g.n()), 0);
  for (int i = 0; i < g.n(); ++i) {
    for (int j = i + 1; j < g.n(); ++j) {
      if (g.edge(i, j) != GraphSchema::kNoEdge) {
        ++d[i];
        ++d[j];
      }
    }
  }
  return d;
}

}  // namespace sidlab
