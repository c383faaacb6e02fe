#include "sidlab/io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "sidlab/error.hpp"
#include "sidlab/mpnn.hpp"

namespace sidlab {

using json = nlohmann::ordered_json;

namespace {

constexpr int kVersion = 1;

json schema_json(const GraphSchema& s) {
  return json{{"d_x", s.d_x}, {"d_e", s.d_e}, {"has_mask", s.has_mask}, {"n_min", s.n_min}, {"n_max", s.n_max}};
}

GraphSchema schema_from(const json& j) {
  GraphSchema s;
  s.d_x = j.at("d_x").get<int>();
  s.d_e = j.at("d_e").get<int>();
  s.has_mask = j.at("has_mask").get<bool>();
  s.n_min = j.at("n_min").get<int>();
  s.n_max = j.at("n_max").get<int>();
  s.validate();
  return s;
}

json parse_document(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string(what) + ": " + e.what());
  }
}

void check_header(const json& j, const char* format) {
  if (!j.is_object() || j.value("format", "") != format || j.value("version", 0) != kVersion) {
    throw Error(ErrorKind::kFormat, std::string("expected a ") + format + " version 1 document");
  }
}

json model_header(const char* kind, const GraphSchema& schema) {
  json j;
  j["format"] = "sidlab-model";
  j["version"] = kVersion;
  j["kind"] = kind;
  j["schema"] = schema_json(schema);
  return j;
}

json mpnn_config_json(const MpnnConfig& c) { return json{{"layers", c.layers}, {"hidden", c.hidden}}; }

MpnnConfig mpnn_config_from(const json& j) {
  MpnnConfig c;
  c.layers = j.at("layers").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.validate();
  return c;
}

}  // namespace

void write_graphs(std::ostream& out, std::span<const GraphInstance> graphs) {
  out << json{{"format", "sidlab-graphs"}, {"version", kVersion}}.dump() << '\n';
  for (const auto& g : graphs) {
    json line;
    line["n"] = g.n();
    line["x"] = std::vector<Label>(g.nodes().begin(), g.nodes().end());
    line["e_upper"] = std::vector<Label>(g.e_upper().begin(), g.e_upper().end());
    out << line.dump() << '\n';
  }
}

std::vector<GraphInstance> read_graphs(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kFormat, "empty graph file");
  check_header(parse_document(line, "graph header"), "sidlab-graphs");
  std::vector<GraphInstance> graphs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = parse_document(line, "graph line");
    try {
      const int n = j.at("n").get<int>();
      auto x = j.at("x").get<std::vector<Label>>();
      auto e = j.at("e_upper").get<std::vector<Label>>();
      if (static_cast<int>(x.size()) != n) throw Error(ErrorKind::kFormat, "node count does not match n");
      graphs.emplace_back(std::move(x), std::move(e));
    } catch (const json::exception& ex) {
      throw Error(ErrorKind::kFormat, std::string("graph line: ") + ex.what());
    } catch (const Error& ex) {
      throw Error(ErrorKind::kFormat, ex.what());
    }
  }
  return graphs;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kMissingModel, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kFormat, "cannot write '" + path + "'");
  out << text;
  if (!out) throw Error(ErrorKind::kFormat, "write to '" + path + "' failed");
}

void save_graphs(const std::string& path, std::span<const GraphInstance> graphs) {
  std::ostringstream ss;
  write_graphs(ss, graphs);
  write_text_file(path, ss.str());
}

std::vector<GraphInstance> load_graphs(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kFormat, "cannot open dataset '" + path + "'");
  return read_graphs(in);
}

std::string denoiser_to_json(const TrainableDenoiser& model) {
  json j;
  if (const auto* m = dynamic_cast<const MpnnDenoiser*>(&model)) {
    j = model_header("mpnn", m->input_schema());
    j["config"] = mpnn_config_json(m->net().config());
  } else if (dynamic_cast<const TabularDenoiser*>(&model) != nullptr) {
    j = model_header("tabular", model.input_schema());
  } else {
    throw Error(ErrorKind::kFormat, "this denoiser kind has no file format");
  }
  j["params"] = std::vector<double>(model.params().begin(), model.params().end());
  return j.dump() + "\n";
}

std::unique_ptr<TrainableDenoiser> denoiser_from_json(const std::string& text) {
  const json j = parse_document(text, "model file");
  check_header(j, "sidlab-model");
  try {
    const std::string kind = j.at("kind").get<std::string>();
    const GraphSchema schema = schema_from(j.at("schema"));
    auto params = j.at("params").get<std::vector<double>>();
    if (kind == "mpnn") {
      return std::make_unique<MpnnDenoiser>(schema, mpnn_config_from(j.at("config")), std::move(params));
    }
    if (kind == "tabular") return std::make_unique<TabularDenoiser>(schema, std::move(params));
    throw Error(ErrorKind::kFormat, "model kind '" + kind + "' is not a denoiser");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("model file: ") + e.what());
  }
}

std::string critic_to_json(const TrainableCritic& critic) {
  json j = model_header("critic", critic.schema());
  json config;
  config["critic_kind"] = std::string(to_string(critic.kind()));
  if (const auto* m = dynamic_cast<const MpnnCritic*>(&critic)) {
    config["layers"] = m->net().config().layers;
    config["hidden"] = m->net().config().hidden;
  } else if (const auto* t = dynamic_cast<const TabularCritic*>(&critic)) {
    config["n"] = t->n();
    config["alpha_grid"] = t->alpha_grid();
  } else {
    throw Error(ErrorKind::kFormat, "this critic kind has no file format");
  }
  j["config"] = config;
  j["params"] = std::vector<double>(critic.params().begin(), critic.params().end());
  return j.dump() + "\n";
}

std::unique_ptr<TrainableCritic> critic_from_json(const std::string& text) {
  const json j = parse_document(text, "critic file");
  check_header(j, "sidlab-model");
  try {
    if (j.at("kind").get<std::string>() != "critic") throw Error(ErrorKind::kFormat, "model file is not a critic");
    const GraphSchema schema = schema_from(j.at("schema"));
    const json& config = j.at("config");
    auto params = j.at("params").get<std::vector<double>>();
    const CriticKind kind = parse_critic_kind(config.at("critic_kind").get<std::string>());
    if (kind == CriticKind::kMpnn) return std::make_unique<MpnnCritic>(schema, mpnn_config_from(config), std::move(params));
    if (kind == CriticKind::kTabular) {
      return std::make_unique<TabularCritic>(schema, config.at("n").get<int>(),
                                             config.at("alpha_grid").get<std::vector<double>>(), std::move(params));
    }
    throw Error(ErrorKind::kFormat, "critic kind has no parameters to load");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("critic file: ") + e.what());
  }
}

void save_denoiser(const std::string& path, const TrainableDenoiser& model) {
  write_text_file(path, denoiser_to_json(model));
}

std::unique_ptr<TrainableDenoiser> load_denoiser(const std::string& path) {
  return denoiser_from_json(read_text_file(path));
}

void save_critic(const std::string& path, const TrainableCritic& critic) { write_text_file(path, critic_to_json(critic)); }

std::unique_ptr<TrainableCritic> load_critic(const std::string& path) { return critic_from_json(read_text_file(path)); }

}  // namespace sidlab
