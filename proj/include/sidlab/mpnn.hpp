#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sidlab/denoiser.hpp"
#include "sidlab/graph.hpp"
#include "sidlab/prob.hpp"

namespace sidlab {

struct MpnnConfig {
  int layers = 2;
  int hidden = 32;  // node width d_h; edges use d_h / 4

  int edge_hidden() const noexcept { return hidden / 4; }
  void validate() const;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense message-passing network over all ordered node pairs.
///
/// Inputs: one-hot node label with alpha appended, one-hot edge label. Per layer:
///   h_ij  = relu(W_src x_i + W_trg x_j + W_edge e_ij + b)
///   e_ij <- e_ij + LayerNorm(f_edge(h_ij))
///   x_i  <- LayerNorm(x_i + sum_{j != i} f_node(h_ij))
/// with f_edge, f_node two-layer ReLU MLPs. Heads project nodes to node_out logits and
/// edges to edge_out logits; edge logits are symmetrized as (l_ij + l_ji) / 2.
///
/// Parameter order (layer-major, matrices row-major):
///   node_in W, b | edge_in W, b |
///   per layer: W_src, W_trg, W_edge, b_h, fe1 W, b, fe2 W, b, ln_e gamma, beta,
///              fn1 W, b, fn2 W, b, ln_x gamma, beta |
///   node_out W, b | edge_out W, b
class Mpnn {
 public:
  Mpnn(MpnnConfig config, int node_vocab, int edge_vocab, int node_out, int edge_out);

  const MpnnConfig& config() const noexcept { return config_; }
  std::size_t param_count() const noexcept { return param_count_; }
  int node_vocab() const noexcept { return node_vocab_; }
  int edge_vocab() const noexcept { return edge_vocab_; }
  int node_out() const noexcept { return node_out_; }
  int edge_out() const noexcept { return edge_out_; }

  /// Glorot-uniform weights, hidden biases uniform in [-0.1, 0.1], unit LayerNorm
  /// gains. Output-head weights are scaled by head_scale and head biases start at zero,
  /// so head_scale = 0 gives an all-zero head.
  std::vector<double> init_params(RngStream rng, double head_scale = 1.0) const;

  struct Output {
    RowMatrix node_logits;  // n x node_out
    RowMatrix edge_logits;  // m x edge_out, upper-triangular order
  };

  struct Tape;

  Output forward(std::span<const double> params, const GraphInstance& g, double alpha, Tape* tape = nullptr) const;
  /// Accumulates d loss / d params into grad given the loss gradients w.r.t. the outputs.
  void backward(std::span<const double> params, const Tape& tape, const RowMatrix& d_node_logits,
                const RowMatrix& d_edge_logits, std::span<double> grad) const;

 private:
  struct LayerOffsets {
    std::size_t w_src, w_trg, w_edge, b_h;
    std::size_t fe1_w, fe1_b, fe2_w, fe2_b, ln_e_g, ln_e_b;
    std::size_t fn1_w, fn1_b, fn2_w, fn2_b, ln_x_g, ln_x_b;
  };

  MpnnConfig config_;
  int node_vocab_, edge_vocab_, node_out_, edge_out_;
  std::size_t in_x_w_, in_x_b_, in_e_w_, in_e_b_;
  std::vector<LayerOffsets> layers_;
  std::size_t out_x_w_, out_x_b_, out_e_w_, out_e_b_;
  std::size_t param_count_;
};

struct Mpnn::Tape {
  struct Layer {
    RowMatrix x, e;            // inputs to the layer
    RowMatrix a, h;            // pre/post ReLU messages (pairs x de)
    RowMatrix f1, fe_hat;      // f_edge hidden, normalized f_edge output
    Eigen::VectorXd fe_inv_std;
    RowMatrix g1, s_hat;       // f_node hidden, normalized node update
    Eigen::VectorXd s_inv_std;
  };
  int n = 0;
  double alpha = 0.0;
  std::vector<Label> nodes;
  std::vector<Label> edges;  // per ordered pair
  std::vector<Layer> layers;
  RowMatrix x_final, e_final;
};

/// Denoiser head on the MPNN trunk: softmax over the clean vocabularies.
class MpnnDenoiser final : public TrainableDenoiser {
 public:
  MpnnDenoiser(const GraphSchema& input_schema, MpnnConfig config, RngStream init_rng);
  MpnnDenoiser(const GraphSchema& input_schema, MpnnConfig config, std::vector<double> params);

  DenoiserKind kind() const override { return DenoiserKind::kMpnn; }
  const GraphSchema& input_schema() const override { return schema_; }
  DenoiserOutput predict(const GraphInstance& z_t, double alpha_t) const override;

  std::span<const double> params() const override { return params_; }
  std::span<double> mutable_params() override { return params_; }
  double accumulate_gradient(const TrainingExample& example, std::span<double> grad) const override;

  const Mpnn& net() const noexcept { return net_; }

 private:
  GraphSchema schema_;
  Mpnn net_;
  std::vector<double> params_;
};

}  // namespace sidlab
