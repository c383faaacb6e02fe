// Python bindings: graphs and families, noising, the Bayes oracle, samplers, critic
// identities, metrics, and the config-driven pipeline.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>
#include <vector>

#include "sidlab/critic.hpp"
#include "sidlab/denoiser.hpp"
#include "sidlab/error.hpp"
#include "sidlab/experiment.hpp"
#include "sidlab/graph.hpp"
#include "sidlab/io.hpp"
#include "sidlab/metrics.hpp"
#include "sidlab/noising.hpp"
#include "sidlab/samplers.hpp"
#include "sidlab/verify.hpp"

namespace py = pybind11;
using namespace sidlab;

namespace {

std::vector<double> probs(const CategoricalDist& d) { return {d.probs().begin(), d.probs().end()}; }

py::dict output_to_dict(const DenoiserOutput& out) {
  std::vector<std::vector<double>> nodes, edges;
  for (const auto& d : out.node_dists) nodes.push_back(probs(d));
  for (const auto& d : out.edge_dists) edges.push_back(probs(d));
  py::dict r;
  r["nodes"] = nodes;
  r["edges"] = edges;
  return r;
}

NoiseSpec make_noise(const std::string& kind, const ToyFamily& family, const std::vector<GraphInstance>& dataset) {
  switch (parse_noise_kind(kind)) {
    case NoiseKind::kMask:
      return NoiseSpec::mask(family.schema());
    case NoiseKind::kUniform:
      return NoiseSpec::uniform(family.schema());
    case NoiseKind::kMarginal:
      return NoiseSpec::marginal(family.schema(), dataset);
  }
  return NoiseSpec::mask(family.schema());
}

// Owns a Bayes oracle together with its noise so Python sees a single object.
struct PyOracle {
  ToyFamily family;
  NoiseSpec noise;
  std::shared_ptr<BayesOracle> oracle;
};

}  // namespace

PYBIND11_MODULE(_sidlab, m) {
  m.doc() = "Iterative denoising samplers for categorical graphs";

  // Messages carry the error kind, e.g. "config-parse: ...".
  py::register_exception<Error>(m, "SidlabError");

  py::class_<GraphInstance>(m, "Graph")
      .def(py::init<std::vector<Label>, std::vector<Label>>(), py::arg("nodes"), py::arg("e_upper"))
      .def_property_readonly("n", &GraphInstance::n)
      .def_property_readonly("nodes", [](const GraphInstance& g) { return std::vector<Label>(g.nodes().begin(), g.nodes().end()); })
      .def_property_readonly("e_upper",
                             [](const GraphInstance& g) { return std::vector<Label>(g.e_upper().begin(), g.e_upper().end()); })
      .def("edge", &GraphInstance::edge)
      .def("permuted", [](const GraphInstance& g, const std::vector<int>& perm) { return g.permuted(perm); })
      .def("__eq__", [](const GraphInstance& a, const GraphInstance& b) { return a == b; })
      .def("__hash__", [](const GraphInstance& g) { return std::hash<std::string>{}(canonical_form(g).key + "#" + std::to_string(g.n())); })
      .def("__repr__", [](const GraphInstance& g) { return "Graph(n=" + std::to_string(g.n()) + ")"; });

  py::class_<ToyFamily>(m, "Family")
      .def_static("triangle_free_4", &ToyFamily::triangle_free_4)
      .def_static("toy_molecule", &ToyFamily::toy_molecule, py::arg("n_min") = 3, py::arg("n_max") = 8)
      .def("is_valid", [](const ToyFamily& f, const GraphInstance& g) { return is_valid(g, f); })
      .def("enumerate",
           [](const ToyFamily& f) {
             std::vector<std::pair<GraphInstance, double>> out;
             for (const auto& w : enumerate_family(f)) out.emplace_back(w.graph, w.probability);
             return out;
           })
      .def("sample", [](const ToyFamily& f, std::size_t count, std::uint64_t seed) {
        return generate_dataset(f, count, RngStream(seed, 0));
      }, py::arg("count"), py::arg("seed") = 0);

  m.def("cosine_alpha", &cosine_alpha, py::arg("t"));
  m.def("optimal_critic", &optimal_critic, py::arg("p_data"), py::arg("p_pred"), py::arg("alpha"));
  m.def("dfm_rate", [](double t, double dt) { return dfm_rate(Schedule(), t, dt); }, py::arg("t"), py::arg("dt"));

  m.def(
      "noise_graph",
      [](const GraphInstance& g, double t, const ToyFamily& family, const std::string& noise, std::uint64_t seed) {
        const auto spec = make_noise(noise, family, {g});
        auto [z, a] = noise_graph(g, t, Schedule(), spec, RngStream(seed, 0));
        std::vector<bool> kept(a.slot_count());
        for (std::size_t k = 0; k < kept.size(); ++k) kept[k] = a.slot(k);
        return std::make_pair(z, kept);
      },
      py::arg("graph"), py::arg("t"), py::arg("family"), py::arg("noise") = "mask", py::arg("seed") = 0,
      "Noise a graph at time t; returns (noisy graph, per-slot kept flags). Marginal noise uses the graph's own labels.");

  py::class_<PyOracle>(m, "BayesOracle")
      .def(py::init([](const ToyFamily& family, const std::string& noise) {
             std::vector<GraphInstance> support;
             for (const auto& w : enumerate_family(family)) support.push_back(w.graph);
             PyOracle o{family, make_noise(noise, family, support), nullptr};
             o.oracle = std::make_shared<BayesOracle>(family, o.noise);
             return o;
           }),
           py::arg("family"), py::arg("noise") = "mask")
      .def("predict", [](const PyOracle& o, const GraphInstance& z, double alpha) {
        return output_to_dict(o.oracle->predict(z, alpha));
      }, py::arg("z_t"), py::arg("alpha_t"))
      .def("sid_step_law",
           [](const PyOracle& o, const GraphInstance& z, double alpha_t, double alpha_s) {
             std::vector<std::vector<double>> out;
             for (const auto& d : sid_step_law(z, o.oracle->predict(z, alpha_t), alpha_s, o.noise)) out.push_back(probs(d));
             return out;
           },
           py::arg("z_t"), py::arg("alpha_t"), py::arg("alpha_s"))
      .def("generate",
           [](const PyOracle& o, const std::string& sampler, int T, std::size_t count, std::uint64_t seed) {
             SamplerSpec spec;
             spec.kind = parse_sampler_kind(sampler);
             spec.T = T;
             spec.noise = o.noise;
             std::vector<GraphInstance> support;
             for (const auto& w : o.oracle->support()) support.push_back(w.graph);
             return generate(*o.oracle, spec, count, SizeSampler::from_dataset(support), RngStream(seed, 0));
           },
           py::arg("sampler") = "sid", py::arg("T") = 16, py::arg("count") = 100, py::arg("seed") = 0,
           "Sample graphs with the exact posterior as the denoiser.");

  m.def("canonical_form", [](const GraphInstance& g) { return canonical_form(g).key; });
  m.def(
      "evaluate",
      [](const std::vector<GraphInstance>& samples, const std::vector<GraphInstance>& dataset, const ToyFamily& family) {
        const auto r = evaluate_batch(samples, dataset, family);
        py::dict d;
        d["validity"] = r.validity;
        d["unique"] = r.unique;
        d["novel"] = r.novel;
        d["degree_tv"] = r.degree_tv;
        return d;
      },
      py::arg("samples"), py::arg("dataset"), py::arg("family"));

  m.def(
      "ablate",
      [](const std::string& config_json) {
        const auto cfg = parse_config(config_json);
        py::gil_scoped_release release;
        const auto data = build_dataset(cfg);
        const auto models = train_models(cfg, data);
        return format_csv(run_ablation(cfg, data, models));
      },
      py::arg("config_json"), "Train on the configured family and return the sampler x NFE validity CSV.");
  m.def("parse_config", [](const std::string& text) { parse_config(text); }, py::arg("config_json"),
        "Validate a config document; raises SidlabError when it is malformed.");

  m.def("verify", [](std::uint64_t seed) {
    std::vector<std::tuple<std::string, bool, std::string>> out;
    for (const auto& r : run_property_suite(seed)) out.emplace_back(r.name, r.passed, r.detail);
    return out;
  }, py::arg("seed") = 0, "Run the property suite; returns (name, passed, detail) triples.");
}
