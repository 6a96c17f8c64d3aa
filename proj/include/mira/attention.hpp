#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mira/ctrope.hpp"
#include "mira/tensor.hpp"

// Causal multi-head self-attention with continuous-time rotary encoding:
// queries and keys are rotated by their own token timestamps before the
// scaled dot product, so scores depend only on timestamp differences.
// Biases exist only on the Q/K/V projections; the output projection is
// bias-free.

namespace mira::attn {

struct AttentionConfig {
  std::size_t d_model = 32;
  std::size_t n_heads = 4;

  std::size_t head_dim() const { return d_model / n_heads; }
  void validate() const;  // head_count * head_dim = d_model, head_dim even
};

struct HeadParams {
  ad::Tensor wq, wk, wv;  // [d_model, head_dim]
  ad::Tensor bq, bk, bv;  // [head_dim]
  ad::Tensor wo;          // [head_dim, d_model], no bias
};

struct AttentionParams {
  AttentionConfig config;
  std::vector<HeadParams> heads;

  static AttentionParams random(const AttentionConfig& cfg, std::mt19937_64& rng);

  // Named views of every trainable tensor, prefixed (e.g. "layer0.attn.").
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, ad::Tensor>>& out) const;
};

// Optional diagnostics captured during the forward pass.
struct AttentionTrace {
  // One row-major L x L probability matrix per head.
  std::vector<std::vector<double>> head_probs;
};

// X is [L, d_model]; timestamps must be strictly increasing on unpadded
// positions. pad_mask (1 = padded) removes positions from both sides of the
// attention and zeroes their output rows.
ad::Tensor ctrope_attention(const AttentionParams& params, const ad::Tensor& x,
                            const std::vector<double>& timestamps,
                            const std::vector<std::uint8_t>* pad_mask = nullptr,
                            AttentionTrace* trace = nullptr);

}  // namespace mira::attn
