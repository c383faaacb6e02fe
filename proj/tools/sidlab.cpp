// sidlab command-line front end: train, sample, ablate, verify.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sidlab/error.hpp"
#include "sidlab/experiment.hpp"
#include "sidlab/io.hpp"
#include "sidlab/verify.hpp"

namespace fs = std::filesystem;
using namespace sidlab;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

ExperimentConfig resolve_config(const Common& c) {
  ExperimentConfig cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

LogFn stderr_log(bool quiet) {
  if (quiet) return {};
  return [](const std::string& line) { std::cerr << line << '\n'; };
}

// Dataset and models live side by side in one directory.
ModelBundle load_models(const ExperimentConfig& cfg, const std::string& dir) {
  ModelBundle m;
  if (cfg.denoiser.kind == DenoiserKind::kBayesOracle) {
    m.denoiser = train_models(cfg, load_graphs(dir + "/dataset.jsonl")).denoiser;
  } else {
    const std::string path = dir + "/denoiser.json";
    if (!fs::exists(path)) throw Error(ErrorKind::kMissingModel, "no denoiser at '" + path + "'");
    m.denoiser = load_denoiser(path);
  }
  if (cfg.critic.enabled) {
    const std::string path = dir + "/critic.json";
    if (!fs::exists(path)) throw Error(ErrorKind::kMissingModel, "no critic at '" + path + "'");
    m.critic = load_critic(path);
  }
  return m;
}

int cmd_train(const Common& c) {
  const ExperimentConfig cfg = resolve_config(c);
  fs::create_directories(c.out);
  const auto dataset = build_dataset(cfg);
  save_graphs(c.out + "/dataset.jsonl", dataset);
  const ModelBundle models = train_models(cfg, dataset, stderr_log(c.quiet));
  if (const auto* d = dynamic_cast<const TrainableDenoiser*>(models.denoiser.get())) {
    save_denoiser(c.out + "/denoiser.json", *d);
  }
  if (models.critic) save_critic(c.out + "/critic.json", *models.critic);
  return 0;
}

int cmd_sample(const Common& c, const std::string& models_dir, const std::string& sampler, int nfe,
               std::size_t count) {
  const ExperimentConfig cfg = resolve_config(c);
  const auto dataset = load_graphs(models_dir + "/dataset.jsonl");
  const ModelBundle models = load_models(cfg, models_dir);
  const auto samples = sample_cell(cfg, dataset, models, parse_sampler_kind(sampler), nfe, count);
  save_graphs(c.out, samples);
  return 0;
}

int cmd_ablate(const Common& c, const std::string& models_dir) {
  const ExperimentConfig cfg = resolve_config(c);
  std::vector<GraphInstance> dataset;
  ModelBundle models;
  if (models_dir.empty()) {
    dataset = build_dataset(cfg);
    models = train_models(cfg, dataset, stderr_log(c.quiet));
  } else {
    dataset = load_graphs(models_dir + "/dataset.jsonl");
    models = load_models(cfg, models_dir);
  }
  const auto rows = run_ablation(cfg, dataset, models, stderr_log(c.quiet));
  for (const auto& r : rows) {
    if (r.approximate) {
      std::cerr << "note: graphs above " << kExactCanonicalMaxN
                << " nodes use an invariant hash for uniqueness/novelty\n";
      break;
    }
  }
  write_text_file(c.out, format_csv(rows));
  return 0;
}

int cmd_verify(const Common& c) {
  const auto results = run_property_suite(c.seed.value_or(0));
  std::string report;
  bool ok = true;
  for (const auto& r : results) {
    report += std::string(r.passed ? "PASS" : "FAIL") + "  " + r.name + "  (" + r.detail + ")\n";
    ok = ok && r.passed;
  }
  std::cout << report;
  if (!c.out.empty()) write_text_file(c.out, report);
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sidlab: iterative denoising samplers for categorical graphs"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub, bool needs_config, bool needs_out) {
    auto* cfg = sub->add_option("--config", common.config, "Experiment config (JSON)");
    if (needs_config) cfg->required();
    sub->add_option("--seed", common.seed, "Override the config seed");
    auto* out = sub->add_option("--out", common.out, "Output path");
    if (needs_out) out->required();
    sub->add_flag("--quiet", common.quiet, "Suppress progress lines");
  };

  auto* train = app.add_subcommand("train", "Generate the dataset and train the denoiser (and critic)");
  add_common(train, true, true);

  std::string models_dir;
  std::string sampler = "sid";
  int nfe = 16;
  std::size_t count = 100;
  auto* sample = app.add_subcommand("sample", "Generate graphs with trained models");
  add_common(sample, true, true);
  sample->add_option("--models", models_dir, "Directory written by 'train'")->required();
  sample->add_option("--sampler", sampler, "sid | ddm_exact | dfm_rate | corrector | cid");
  sample->add_option("--nfe", nfe, "Number of denoising steps")->check(CLI::PositiveNumber);
  sample->add_option("--count", count, "Number of graphs")->check(CLI::PositiveNumber);

  auto* ablate = app.add_subcommand("ablate", "Run the sampler x NFE grid and write a CSV");
  add_common(ablate, true, true);
  ablate->add_option("--models", models_dir, "Reuse models from 'train' instead of training");

  auto* verify = app.add_subcommand("verify", "Run the property suite");
  add_common(verify, false, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(common);
    if (*sample) return cmd_sample(common, models_dir, sampler, nfe, count);
    if (*ablate) return cmd_ablate(common, models_dir);
    if (*verify) return cmd_verify(common);
  } catch (const Error& e) {
    std::cerr << "sidlab: error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "sidlab: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
