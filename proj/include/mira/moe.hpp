#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mira/tensor.hpp"

// Sparse Mixture-of-Experts feed-forward layer: N routed two-layer experts
// (hidden width d_expert), one always-on shared expert (hidden width d_ff),
// top-K softmax gating without renormalization, a sigmoid gate on the shared
// path, and a load-balancing auxiliary loss. All expert networks are
// bias-free with tanh activations. A dense single-FFN mode of matched
// activated width is available for ablations.

namespace mira::moe {

struct MoEConfig {
  std::size_t d_model = 32;
  std::size_t n_experts = 4;  // N
  std::size_t top_k = 2;      // K
  std::size_t d_expert = 16;  // routed expert hidden width
  std::size_t d_ff = 64;      // shared expert hidden width
  bool dense = false;         // ablation: one FFN of width d_ff + K * d_expert

  void validate() const;  // 1 <= K <= N, positive widths
};

struct MoEParams {
  MoEConfig config;
  std::vector<ad::Tensor> expert_w1;  // N of [d_expert, d_model]
  std::vector<ad::Tensor> expert_w2;  // N of [d_model, d_expert]
  ad::Tensor shared_w1;               // [d_ff, d_model]
  ad::Tensor shared_w2;               // [d_model, d_ff]
  ad::Tensor router;                  // [d_model, N] gating vectors as columns
  ad::Tensor shared_gate;             // [d_model, 1] sigmoid-gate vector
  ad::Tensor dense_w1, dense_w2;      // dense mode only

  static MoEParams random(const MoEConfig& cfg, std::mt19937_64& rng);
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, ad::Tensor>>& out) const;
};

struct MoEGates {
  std::vector<double> scores;        // softmax over N experts, sums to 1
  std::vector<double> gates;         // score if selected, else exactly 0
  std::vector<std::size_t> selected; // K expert indices, ascending
  double shared_gate = 0.0;          // sigmoid, in (0, 1)
};

struct RoutingStats {
  std::vector<double> selection_fraction;  // f_i, sums to 1
  std::vector<double> mean_score;          // r_i, sums to 1
  std::size_t tokens = 0;
};

// Routing for a single token vector; ties broken toward lower expert index.
MoEGates route(const MoEParams& params, const std::vector<double>& u);

// N * sum_i f_i * r_i; equals 1 exactly under uniform routing.
double aux_loss(const RoutingStats& stats, std::size_t n_experts);

struct MoEOutput {
  ad::Tensor output;  // [L, d_model]
  ad::Tensor aux;     // differentiable through mean scores only; 0 in dense mode
  RoutingStats stats;
};

MoEOutput moe_forward(const MoEParams& params, const ad::Tensor& u);

}  // namespace mira::moe
