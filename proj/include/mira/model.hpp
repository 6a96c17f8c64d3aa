#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mira/attention.hpp"
#include "mira/moe.hpp"
#include "mira/node.hpp"
#include "mira/series.hpp"
#include "mira/tensor.hpp"

// The assembled decoder: point-wise value embedding, stacked pre-norm blocks
// of CT-RoPE attention and sparse MoE, a final RMS norm, a Neural-ODE block
// that evolves the last latent to each target timestamp, and a bias-free
// scalar head. Forecasting is autoregressive over known target timestamps;
// training uses teacher forcing.

namespace mira::model {

enum class RopeMode { timestamp, index };          // index = ablation
enum class Extrapolation { ode, identity };        // identity = ablation

RopeMode parse_rope_mode(const std::string& name);
Extrapolation parse_extrapolation(const std::string& name);
node::GradMode parse_grad_mode(const std::string& name);

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t d_model = 32;
  std::size_t d_ff = 64;
  std::size_t d_expert = 16;
  std::size_t n_experts = 4;
  std::size_t top_k = 2;
  std::size_t n_heads = 4;
  std::size_t max_seq_len = 512;
  double huber_delta = 1.0;
  double aux_weight = 0.02;

  RopeMode rope_mode = RopeMode::timestamp;
  bool dense_ffn = false;  // ablation: MoE replaced by a dense FFN
  Extrapolation extrapolation = Extrapolation::ode;
  node::GradMode grad_mode = node::GradMode::adjoint;
  bool spectral_norm = false;
  node::SolverConfig solver;

  static ModelConfig tiny();
  static ModelConfig small();
  static ModelConfig base();
  static ModelConfig large();
  static ModelConfig preset(const std::string& name);

  void validate() const;
};

struct DecoderLayer {
  ad::Tensor norm_attn;  // RMS-norm gain before attention
  ad::Tensor norm_moe;   // RMS-norm gain before the MoE block
  attn::AttentionParams attention;
  moe::MoEParams moe;
};

struct Model {
  ModelConfig config;
  ad::Tensor embed_w, embed_b;  // scalar -> d_model affine embedding
  std::vector<DecoderLayer> layers;
  ad::Tensor final_norm;
  node::DynamicsParams dynamics;
  ad::Tensor head_w;  // [d_model], bias-free scalar head
  node::SpectralNormState sn_state;

  static Model init(const ModelConfig& cfg, std::uint64_t seed);

  std::vector<std::pair<std::string, ad::Tensor>> named_parameters() const;
  std::size_t parameter_count() const;
};

struct ForwardResult {
  ad::Tensor latents;                       // [L, d_model], post final norm
  std::vector<moe::RoutingStats> stats;     // one per layer
  std::vector<ad::Tensor> aux;              // one scalar per layer
};

// `values` are normalized observations; timestamps strictly increasing.
ForwardResult forward(const Model& m, const std::vector<double>& values,
                      const std::vector<double>& timestamps);

// Extrapolates one latent row from t_from to t_to and decodes it to a
// normalized scalar prediction.
ad::Tensor decode_latent(const Model& m, const ad::Tensor& latent, double t_from,
                         double t_to);

struct LossBreakdown {
  ad::Tensor total;
  double huber = 0.0;
  double aux = 0.0;  // mean over layers, before the alpha weight
  std::vector<moe::RoutingStats> stats;
  std::vector<double> predictions;  // normalized, length H (NaN when not asked)
};

// Teacher-forced training objective on one normalized window: context plus
// true targets form the input sequence; each target is predicted from the
// preceding token's latent. Missing targets are carried forward as inputs
// but excluded from the Huber mean.
LossBreakdown teacher_forced_loss(const Model& m, const series::Window& w);

// Free-running training objective: the window is rolled out autoregressively
// with the model's own (detached) normalized predictions fed back, so the
// training distribution matches inference. Costs H forward passes.
LossBreakdown rollout_loss(const Model& m, const series::Window& w);

// Free-running autoregressive forecast. Context values are raw; the stats
// normalize inputs and denormalize the returned predictions.
std::vector<double> forecast(const Model& m, const std::vector<double>& context_values,
                             const std::vector<double>& context_timestamps,
                             const std::vector<double>& target_timestamps,
                             const series::NormStats& stats);

}  // namespace mira::model
