#pragma once

#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sidlab/critic.hpp"
#include "sidlab/denoiser.hpp"
#include "sidlab/graph.hpp"

namespace sidlab {

// Graph datasets: JSON lines. The first line is {"format":"sidlab-graphs","version":1},
// then one {"n":..,"x":[..],"e_upper":[..]} per graph with e_upper in row-major order.

void write_graphs(std::ostream& out, std::span<const GraphInstance> graphs);
std::vector<GraphInstance> read_graphs(std::istream& in);
void save_graphs(const std::string& path, std::span<const GraphInstance> graphs);
std::vector<GraphInstance> load_graphs(const std::string& path);

// Models: one JSON document
//   {"format":"sidlab-model","version":1,"kind":...,"schema":{...},"params":[...]}
// kind is "mpnn" or "tabular" for denoisers and "critic" for critics; architecture
// settings sit in an extra "config" object. Parameters keep the model's flat order.

std::string denoiser_to_json(const TrainableDenoiser& model);
std::unique_ptr<TrainableDenoiser> denoiser_from_json(const std::string& text);
std::string critic_to_json(const TrainableCritic& critic);
std::unique_ptr<TrainableCritic> critic_from_json(const std::string& text);

void save_denoiser(const std::string& path, const TrainableDenoiser& model);
std::unique_ptr<TrainableDenoiser> load_denoiser(const std::string& path);
void save_critic(const std::string& path, const TrainableCritic& critic);
std::unique_ptr<TrainableCritic> load_critic(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace sidlab
