#include "sidlab/experiment.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

#include "sidlab/error.hpp"
#include "sidlab/io.hpp"

namespace sidlab {

using json = nlohmann::ordered_json;

namespace {

enum Stage : std::uint64_t { kDatasetStage = 1, kDenoiserStage = 2, kCriticStage = 3, kSamplingStage = 4 };

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

TrainConfig parse_train(const json& j, TrainConfig t) {
  t.epochs = get_or(j, "epochs", t.epochs);
  t.batch_size = get_or(j, "batch_size", t.batch_size);
  t.holdout_fraction = get_or(j, "holdout_fraction", t.holdout_fraction);
  if (j.contains("optimizer")) t.optimizer.kind = parse_optimizer_kind(j.at("optimizer").get<std::string>());
  t.optimizer.lr = get_or(j, "lr", t.optimizer.lr);
  t.optimizer.momentum = get_or(j, "momentum", t.optimizer.momentum);
  return t;
}

MpnnConfig parse_mpnn(const json& j, MpnnConfig c) {
  c.layers = get_or(j, "layers", c.layers);
  c.hidden = get_or(j, "hidden", c.hidden);
  return c;
}

}  // namespace

void ExperimentConfig::validate() const {
  family.validate();
  if (dataset_size < 1) throw Error(ErrorKind::kConfigParse, "dataset_size must be at least 1");
  if (nfe.empty()) throw Error(ErrorKind::kConfigParse, "the NFE list is empty");
  for (int t : nfe) {
    if (t < 1) throw Error(ErrorKind::kConfigParse, "every NFE must be at least 1");
  }
  if (samplers.empty()) throw Error(ErrorKind::kConfigParse, "no samplers listed");
  if (samples < 1) throw Error(ErrorKind::kConfigParse, "samples must be at least 1");
  for (SamplerKind s : samplers) {
    if (s == SamplerKind::kCid && !critic.enabled) {
      throw Error(ErrorKind::kConfigParse, "sampler 'cid' needs \"critic\": {\"enabled\": true}");
    }
    if (s == SamplerKind::kCid && noise != NoiseKind::kMask) {
      throw Error(ErrorKind::kConfigParse, "sampler 'cid' needs mask noise");
    }
  }
  if (critic.enabled && noise != NoiseKind::kMask) throw Error(ErrorKind::kConfigParse, "the critic needs mask noise");
  denoiser.mpnn.validate();
  critic.mpnn.validate();
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfigParse, e.what());
  }
  ExperimentConfig c;
  try {
    if (!j.is_object() || j.value("format", "") != "sidlab-config" || j.value("version", 0) != 1) {
      throw Error(ErrorKind::kConfigParse, "expected {\"format\":\"sidlab-config\",\"version\":1,...}");
    }
    if (j.contains("family")) {
      const json& f = j.at("family");
      const FamilyKind kind = parse_family_kind(f.at("kind").get<std::string>());
      if (kind == FamilyKind::kTriangleFree4) {
        c.family = ToyFamily::triangle_free_4();
      } else {
        c.family = ToyFamily::toy_molecule(get_or(f, "n_min", 3), get_or(f, "n_max", 8));
        if (f.contains("valences")) c.family.valences = f.at("valences").get<std::vector<int>>();
        if (f.contains("bond_orders")) c.family.bond_orders = f.at("bond_orders").get<std::vector<int>>();
      }
    }
    c.dataset_size = get_or<std::size_t>(j, "dataset_size", c.dataset_size);
    if (j.contains("noise")) c.noise = parse_noise_kind(j.at("noise").get<std::string>());
    if (j.contains("schedule")) c.schedule = parse_schedule_kind(j.at("schedule").get<std::string>());
    if (j.contains("denoiser")) {
      const json& d = j.at("denoiser");
      if (d.contains("kind")) c.denoiser.kind = parse_denoiser_kind(d.at("kind").get<std::string>());
      c.denoiser.mpnn = parse_mpnn(d, c.denoiser.mpnn);
      c.denoiser.train = parse_train(d, c.denoiser.train);
    }
    if (j.contains("critic")) {
      const json& d = j.at("critic");
      c.critic.enabled = get_or(d, "enabled", true);
      c.critic.mpnn = parse_mpnn(d, c.critic.mpnn);
      c.critic.train = parse_train(d, c.critic.train);
    }
    if (j.contains("samplers")) {
      c.samplers.clear();
      for (const auto& s : j.at("samplers")) c.samplers.push_back(parse_sampler_kind(s.get<std::string>()));
    }
    if (j.contains("nfe")) c.nfe = j.at("nfe").get<std::vector<int>>();
    c.samples = get_or<std::size_t>(j, "samples", c.samples);
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfigParse, e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kConfigParse) throw;
    throw Error(ErrorKind::kConfigParse, e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const Error&) {
    throw Error(ErrorKind::kConfigParse, "cannot read config '" + path + "'");
  }
  return parse_config(text);
}

RngStream stage_rng(std::uint64_t seed, std::uint64_t stage) { return RngStream(seed, 0).split(stage); }

std::vector<GraphInstance> build_dataset(const ExperimentConfig& config) {
  return generate_dataset(config.family, config.dataset_size, stage_rng(config.seed, kDatasetStage));
}

NoiseSpec build_noise(const ExperimentConfig& config, std::span<const GraphInstance> dataset) {
  return NoiseSpec::make(config.noise, config.family.schema(), dataset);
}

ModelBundle train_models(const ExperimentConfig& config, std::span<const GraphInstance> dataset, const LogFn& log) {
  const NoiseSpec noise = build_noise(config, dataset);
  const Schedule schedule(config.schedule);
  ModelBundle bundle;
  const RngStream drng = stage_rng(config.seed, kDenoiserStage);
  auto epoch_log = [&](const char* what) -> EpochCallback {
    if (!log) return {};
    return [&log, what](const EpochStats& s) {
      std::ostringstream ss;
      ss << what << " epoch " << s.epoch << " train_loss " << s.train_loss;
      if (std::isfinite(s.holdout_loss)) ss << " holdout_loss " << s.holdout_loss;
      log(ss.str());
    };
  };
  switch (config.denoiser.kind) {
    case DenoiserKind::kBayesOracle:
      bundle.denoiser = std::make_unique<BayesOracle>(config.family, noise);
      break;
    case DenoiserKind::kTabular: {
      auto model = std::make_unique<TabularDenoiser>(noise.schema);
      train_denoiser(dataset, *model, config.denoiser.train, schedule, noise, drng.split(1), epoch_log("denoiser"));
      bundle.denoiser = std::move(model);
      break;
    }
    case DenoiserKind::kMpnn: {
      auto model = std::make_unique<MpnnDenoiser>(noise.schema, config.denoiser.mpnn, drng.split(0));
      train_denoiser(dataset, *model, config.denoiser.train, schedule, noise, drng.split(1), epoch_log("denoiser"));
      bundle.denoiser = std::move(model);
      break;
    }
  }
  if (config.critic.enabled) {
    const RngStream crng = stage_rng(config.seed, kCriticStage);
    auto critic = std::make_unique<MpnnCritic>(config.family.schema(), config.critic.mpnn, crng.split(0));
    CriticTrainConfig ct;
    ct.train = config.critic.train;
    train_critic(dataset, *bundle.denoiser, *critic, ct, schedule, noise, crng.split(1), epoch_log("critic"));
    bundle.critic = std::move(critic);
  }
  return bundle;
}

std::vector<GraphInstance> sample_cell(const ExperimentConfig& config, std::span<const GraphInstance> dataset,
                                       const ModelBundle& models, SamplerKind sampler, int nfe, std::size_t count) {
  if (!models.denoiser) throw Error(ErrorKind::kMissingModel, "no denoiser loaded");
  if (sampler == SamplerKind::kCid && !models.critic) throw Error(ErrorKind::kMissingModel, "no critic loaded");
  SamplerSpec spec;
  spec.kind = sampler;
  spec.T = nfe;
  spec.noise = build_noise(config, dataset);
  spec.schedule = Schedule(config.schedule);
  if (!(models.denoiser->input_schema() == spec.noise.schema)) {
    throw Error(ErrorKind::kDimensionMismatch, "denoiser was built for a different schema or noise kind");
  }
  const RngStream rng = stage_rng(config.seed, kSamplingStage)
                            .split(static_cast<std::uint64_t>(sampler), static_cast<std::uint64_t>(nfe));
  return generate(*models.denoiser, spec, count, SizeSampler::from_dataset(dataset), rng, models.critic.get());
}

std::vector<MetricsRow> run_ablation(const ExperimentConfig& config, std::span<const GraphInstance> dataset,
                                     const ModelBundle& models, const LogFn& log) {
  config.validate();
  std::vector<MetricsRow> rows;
  for (SamplerKind sampler : config.samplers) {
    for (int nfe : config.nfe) {
      const auto samples = sample_cell(config, dataset, models, sampler, nfe, config.samples);
      MetricsRow row = evaluate_batch(samples, dataset, config.family);
      row.sampler = std::string(to_string(sampler));
      row.nfe = nfe;
      row.seed = config.seed;
      if (log) log(csv_row(row).substr(0, csv_row(row).size() - 1));
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string format_csv(const std::vector<MetricsRow>& rows) {
  std::string out = csv_header();
  for (const auto& r : rows) out += csv_row(r);
  return out;
}

}  // namespace sidlab
