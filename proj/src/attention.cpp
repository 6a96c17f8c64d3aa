#include "mira/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mira/ops.hpp"

namespace mira::attn {

void AttentionConfig::validate() const {
  if (n_heads == 0 || d_model == 0 || d_model % n_heads != 0) {
    throw std::invalid_argument("AttentionConfig: d_model " + std::to_string(d_model) +
                                " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (head_dim() % 2 != 0) {
    throw std::invalid_argument("AttentionConfig: head dimension " +
                                std::to_string(head_dim()) + " must be even");
  }
}

AttentionParams AttentionParams::random(const AttentionConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  const std::size_t hd = cfg.head_dim();
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  auto weight = [&](std::size_t r, std::size_t c) {
    ad::Tensor t = ad::Tensor::zeros({r, c}, /*requires_grad=*/true);
    for (double& v : t.data()) v = dist(rng);
    return t;
  };
  AttentionParams p;
  p.config = cfg;
  p.heads.reserve(cfg.n_heads);
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    HeadParams head;
    head.wq = weight(d, hd);
    head.wk = weight(d, hd);
    head.wv = weight(d, hd);
    head.bq = ad::Tensor::zeros({hd}, true);
    head.bk = ad::Tensor::zeros({hd}, true);
    head.bv = ad::Tensor::zeros({hd}, true);
    head.wo = weight(hd, d);
    p.heads.push_back(head);
  }
  return p;
}

void AttentionParams::collect(const std::string& prefix,
                              std::vector<std::pair<std::string, ad::Tensor>>& out) const {
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const std::string base = prefix + "head" + std::to_string(h) + ".";
    out.emplace_back(base + "wq", heads[h].wq);
    out.emplace_back(base + "bq", heads[h].bq);
    out.emplace_back(base + "wk", heads[h].wk);
    out.emplace_back(base + "bk", heads[h].bk);
    out.emplace_back(base + "wv", heads[h].wv);
    out.emplace_back(base + "bv", heads[h].bv);
    out.emplace_back(base + "wo", heads[h].wo);
  }
}

ad::Tensor ctrope_attention(const AttentionParams& params, const ad::Tensor& x,
                            const std::vector<double>& timestamps,
                            const std::vector<std::uint8_t>* pad_mask,
                            AttentionTrace* trace) {
  params.config.validate();
  const std::size_t L = x.rows();
  const std::size_t d = params.config.d_model;
  if (x.shape().size() != 2 || x.cols() != d) {
    throw std::invalid_argument("ctrope_attention: expected [L, " + std::to_string(d) +
                                "], got " + ad::shape_string(x.shape()));
  }
  if (L == 0) throw std::invalid_argument("ctrope_attention: empty sequence");
  if (timestamps.size() != L) {
    throw std::invalid_argument("ctrope_attention: " + std::to_string(timestamps.size()) +
                                " timestamps for L = " + std::to_string(L));
  }
  if (pad_mask != nullptr && pad_mask->size() != L) {
    throw std::invalid_argument("ctrope_attention: pad mask length mismatch");
  }
  auto padded = [&](std::size_t i) { return pad_mask != nullptr && (*pad_mask)[i] != 0; };
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < L; ++i) {
    if (padded(i)) continue;
    if (!(timestamps[i] > prev)) {
      throw std::invalid_argument("ctrope_attention: timestamps not strictly increasing at " +
                                  std::to_string(i));
    }
    prev = timestamps[i];
  }

  // Shared causal mask: query i sees key j iff j <= i and neither is padded.
  // Padded query rows keep only themselves so the softmax stays defined;
  // their outputs are zeroed below.
  std::vector<std::uint8_t> keep(L * L, 0);
  for (std::size_t i = 0; i < L; ++i) {
    if (padded(i)) {
      keep[i * L + i] = 1;
      continue;
    }
    for (std::size_t j = 0; j <= i; ++j) {
      if (!padded(j)) keep[i * L + j] = 1;
    }
  }
  std::vector<std::uint8_t> zero_rows;
  if (pad_mask != nullptr) {
    zero_rows.assign(L * d, 0);
    for (std::size_t i = 0; i < L; ++i) {
      if (padded(i)) std::fill_n(zero_rows.begin() + i * d, d, 1);
    }
  }

  const ctrope::RotaryFrequencies freq(params.config.head_dim());
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(params.config.head_dim()));
  if (trace != nullptr) trace->head_probs.clear();

  ad::Tensor out;
  for (const HeadParams& head : params.heads) {
    ad::Tensor q = ad::add_bias(ad::matmul(x, head.wq), head.bq);
    ad::Tensor k = ad::add_bias(ad::matmul(x, head.wk), head.bk);
    ad::Tensor v = ad::add_bias(ad::matmul(x, head.wv), head.bv);
    q = ctrope::rotate_rows(freq, q, timestamps);
    k = ctrope::rotate_rows(freq, k, timestamps);
    ad::Tensor scores = ad::scale(ad::matmul_nt(q, k), inv_sqrt);
    ad::Tensor probs = ad::softmax_rows(scores, &keep);
    if (trace != nullptr) trace->head_probs.push_back(probs.data());
    ad::Tensor mixed = ad::matmul(probs, v);
    ad::Tensor projected = ad::matmul(mixed, head.wo);
    out = out.defined() ? ad::add(out, projected) : projected;
  }
  if (!zero_rows.empty()) out = ad::masked_fill(out, zero_rows, 0.0);
  return out;
}

}  // namespace mira::attn
