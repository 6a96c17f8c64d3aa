#include "mira/moe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mira/ops.hpp"

namespace mira::moe {

void MoEConfig::validate() const {
  if (d_model == 0) throw std::invalid_argument("MoEConfig: d_model must be positive");
  if (dense) {
    if (d_ff + top_k * d_expert == 0) {
      throw std::invalid_argument("MoEConfig: dense hidden width must be positive");
    }
    return;
  }
  if (n_experts == 0 || d_expert == 0 || d_ff == 0) {
    throw std::invalid_argument("MoEConfig: expert counts and widths must be positive");
  }
  if (top_k == 0 || top_k > n_experts) {
    throw std::invalid_argument("MoEConfig: top_k " + std::to_string(top_k) +
                                " out of range for " + std::to_string(n_experts) +
                                " experts");
  }
}

MoEParams MoEParams::random(const MoEConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  auto weight = [&rng](std::size_t r, std::size_t c) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(c)));
    ad::Tensor t = ad::Tensor::zeros({r, c}, /*requires_grad=*/true);
    for (double& v : t.data()) v = dist(rng);
    return t;
  };
  MoEParams p;
  p.config = cfg;
  if (cfg.dense) {
    const std::size_t hidden = cfg.d_ff + cfg.top_k * cfg.d_expert;
    p.dense_w1 = weight(hidden, cfg.d_model);
    p.dense_w2 = weight(cfg.d_model, hidden);
    return p;
  }
  for (std::size_t i = 0; i < cfg.n_experts; ++i) {
    p.expert_w1.push_back(weight(cfg.d_expert, cfg.d_model));
    p.expert_w2.push_back(weight(cfg.d_model, cfg.d_expert));
  }
  p.shared_w1 = weight(cfg.d_ff, cfg.d_model);
  p.shared_w2 = weight(cfg.d_model, cfg.d_ff);
  p.router = weight(cfg.d_model, cfg.n_experts);
  p.shared_gate = weight(cfg.d_model, 1);
  return p;
}

void MoEParams::collect(const std::string& prefix,
                        std::vector<std::pair<std::string, ad::Tensor>>& out) const {
  if (config.dense) {
    out.emplace_back(prefix + "dense_w1", dense_w1);
    out.emplace_back(prefix + "dense_w2", dense_w2);
    return;
  }
  for (std::size_t i = 0; i < expert_w1.size(); ++i) {
    out.emplace_back(prefix + "expert" + std::to_string(i) + ".w1", expert_w1[i]);
    out.emplace_back(prefix + "expert" + std::to_string(i) + ".w2", expert_w2[i]);
  }
  out.emplace_back(prefix + "shared.w1", shared_w1);
  out.emplace_back(prefix + "shared.w2", shared_w2);
  out.emplace_back(prefix + "router", router);
  out.emplace_back(prefix + "shared_gate", shared_gate);
}

namespace {

// Top-K indices by score, ties toward the lower index; returned ascending.
std::vector<std::size_t> select_top_k(const double* scores, std::size_t n, std::size_t k) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace

MoEGates route(const MoEParams& params, const std::vector<double>& u) {
  const MoEConfig& cfg = params.config;
  cfg.validate();
  if (cfg.dense) throw std::logic_error("route: dense mode has no router");
  if (u.size() != cfg.d_model) {
    throw std::invalid_argument("route: token length " + std::to_string(u.size()) +
                                " != d_model " + std::to_string(cfg.d_model));
  }
  const std::size_t n = cfg.n_experts;
  MoEGates g;
  g.scores.resize(n);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double logit = 0.0;
    for (std::size_t j = 0; j < cfg.d_model; ++j) logit += u[j] * params.router.at(j, i);
    g.scores[i] = logit;
    mx = std::max(mx, logit);
  }
  double z = 0.0;
  for (double& s : g.scores) {
    s = std::exp(s - mx);
    z += s;
  }
  for (double& s : g.scores) s /= z;
  g.selected = select_top_k(g.scores.data(), n, cfg.top_k);
  g.gates.assign(n, 0.0);
  for (std::size_t i : g.selected) g.gates[i] = g.scores[i];
  double gate_logit = 0.0;
  for (std::size_t j = 0; j < cfg.d_model; ++j) {
    gate_logit += u[j] * params.shared_gate.at(j, 0);
  }
  g.shared_gate = 1.0 / (1.0 + std::exp(-gate_logit));
  return g;
}

double aux_loss(const RoutingStats& stats, std::size_t n_experts) {
  if (stats.tokens == 0) throw std::invalid_argument("aux_loss: no tokens routed");
  double acc = 0.0;
  for (std::size_t i = 0; i < n_experts; ++i) {
    acc += stats.selection_fraction.at(i) * stats.mean_score.at(i);
  }
  return static_cast<double>(n_experts) * acc;
}

MoEOutput moe_forward(const MoEParams& params, const ad::Tensor& u) {
  const MoEConfig& cfg = params.config;
  cfg.validate();
  if (u.shape().size() != 2 || u.cols() != cfg.d_model) {
    throw std::invalid_argument("moe_forward: expected [L, " + std::to_string(cfg.d_model) +
                                "], got " + ad::shape_string(u.shape()));
  }
  const std::size_t L = u.rows();

  MoEOutput out;
  if (cfg.dense) {
    // Dense FFN: u * W1^T -> tanh -> * W2^T, all bias-free.
    out.output = ad::matmul_nt(ad::tanh_(ad::matmul_nt(u, params.dense_w1)), params.dense_w2);
    out.aux = ad::Tensor::scalar(0.0);
    out.stats.tokens = L;
    return out;
  }

  const std::size_t n = cfg.n_experts;
  ad::Tensor scores = ad::softmax_rows(ad::matmul(u, params.router));       // [L, N]
  ad::Tensor shared_sig = ad::sigmoid_(ad::matmul(u, params.shared_gate));  // [L, 1]

  std::vector<double> counts(n, 0.0);
  std::vector<ad::Tensor> token_rows;
  token_rows.reserve(L);
  for (std::size_t t = 0; t < L; ++t) {
    const std::vector<std::size_t> selected =
        select_top_k(scores.data().data() + t * n, n, cfg.top_k);
    ad::Tensor u_t = ad::row(u, t);
    ad::Tensor shared =
        ad::matvec(params.shared_w2, ad::tanh_(ad::matvec(params.shared_w1, u_t)));
    ad::Tensor acc = ad::scale_by(shared, ad::element(shared_sig, t));
    for (std::size_t i : selected) {
      counts[i] += 1.0;
      ad::Tensor e =
          ad::matvec(params.expert_w2[i], ad::tanh_(ad::matvec(params.expert_w1[i], u_t)));
      acc = ad::add(acc, ad::scale_by(e, ad::element(scores, t * n + i)));
    }
    token_rows.push_back(acc);
  }
  out.output = ad::concat_rows(token_rows);

  out.stats.tokens = L;
  out.stats.selection_fraction.resize(n);
  out.stats.mean_score.resize(n);
  const double denom = static_cast<double>(cfg.top_k) * static_cast<double>(L);
  for (std::size_t i = 0; i < n; ++i) {
    out.stats.selection_fraction[i] = counts[i] / denom;
    double col = 0.0;
    for (std::size_t t = 0; t < L; ++t) col += scores.at(t, i);
    out.stats.mean_score[i] = col / static_cast<double>(L);
  }

  // aux = N * sum_i f_i r_i with r_i the column means of `scores`; f_i enters
  // as a constant weight so gradients flow through the scores alone.
  std::vector<double> weights(L * n);
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      weights[t * n + i] = static_cast<double>(n) * out.stats.selection_fraction[i] /
                           static_cast<double>(L);
    }
  }
  out.aux = ad::dot_const(scores, weights);
  return out;
}

}  // namespace mira::moe
