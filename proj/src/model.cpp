#include "mira/model.hpp"

#include <cmath>
#include <stdexcept>

#include "mira/ops.hpp"

namespace mira::model {

RopeMode parse_rope_mode(const std::string& name) {
  if (name == "timestamp") return RopeMode::timestamp;
  if (name == "index") return RopeMode::index;
  throw std::invalid_argument("unknown rope mode '" + name + "' (timestamp|index)");
}

Extrapolation parse_extrapolation(const std::string& name) {
  if (name == "ode") return Extrapolation::ode;
  if (name == "identity") return Extrapolation::identity;
  throw std::invalid_argument("unknown extrapolation '" + name + "' (ode|identity)");
}

node::GradMode parse_grad_mode(const std::string& name) {
  if (name == "adjoint") return node::GradMode::adjoint;
  if (name == "backprop") return node::GradMode::backprop;
  throw std::invalid_argument("unknown grad mode '" + name + "' (adjoint|backprop)");
}

ModelConfig ModelConfig::tiny() {
  return {};  // the defaults are the tiny test configuration
}

ModelConfig ModelConfig::small() {
  ModelConfig c;
  c.layers = 8;
  c.d_model = 288;
  c.d_ff = 1152;
  c.d_expert = 144;
  c.n_experts = 8;
  c.top_k = 2;
  c.n_heads = 8;
  return c;
}

ModelConfig ModelConfig::base() {
  ModelConfig c;
  c.layers = 12;
  c.d_model = 384;
  c.d_ff = 1536;
  c.d_expert = 192;
  c.n_experts = 8;
  c.top_k = 2;
  c.n_heads = 8;
  return c;
}

ModelConfig ModelConfig::large() {
  ModelConfig c;
  c.layers = 12;
  c.d_model = 768;
  c.d_ff = 3072;
  c.d_expert = 384;
  c.n_experts = 8;
  c.top_k = 2;
  c.n_heads = 8;
  return c;
}

ModelConfig ModelConfig::preset(const std::string& name) {
  if (name == "tiny") return tiny();
  if (name == "small") return small();
  if (name == "base") return base();
  if (name == "large") return large();
  throw std::invalid_argument("unknown preset '" + name + "' (tiny|small|base|large)");
}

void ModelConfig::validate() const {
  if (layers == 0) throw std::invalid_argument("ModelConfig: need at least one layer");
  attn::AttentionConfig{d_model, n_heads}.validate();
  moe::MoEConfig{d_model, n_experts, top_k, d_expert, d_ff, dense_ffn}.validate();
  if (max_seq_len < 2) throw std::invalid_argument("ModelConfig: max_seq_len too small");
  if (!(huber_delta > 0.0)) throw std::invalid_argument("ModelConfig: huber_delta must be > 0");
  if (aux_weight < 0.0) throw std::invalid_argument("ModelConfig: aux_weight must be >= 0");
  solver.validate();
}

Model Model::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(cfg.d_model)));
  auto vec = [&](std::size_t n) {
    ad::Tensor t = ad::Tensor::zeros({n}, /*requires_grad=*/true);
    for (double& v : t.data()) v = dist(rng);
    return t;
  };
  Model m;
  m.config = cfg;
  // Unit-scale embedding keeps token rows well away from zero, where the
  // pre-norm would otherwise amplify with extreme curvature.
  std::normal_distribution<double> unit(0.0, 1.0);
  m.embed_w = ad::Tensor::zeros({cfg.d_model}, true);
  m.embed_b = ad::Tensor::zeros({cfg.d_model}, true);
  for (double& v : m.embed_w.data()) v = unit(rng);
  for (double& v : m.embed_b.data()) v = unit(rng);
  const attn::AttentionConfig acfg{cfg.d_model, cfg.n_heads};
  const moe::MoEConfig mcfg{cfg.d_model, cfg.n_experts, cfg.top_k,
                            cfg.d_expert,  cfg.d_ff,      cfg.dense_ffn};
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    DecoderLayer layer;
    layer.norm_attn = ad::Tensor::full({cfg.d_model}, 1.0, true);
    layer.norm_moe = ad::Tensor::full({cfg.d_model}, 1.0, true);
    layer.attention = attn::AttentionParams::random(acfg, rng);
    layer.moe = moe::MoEParams::random(mcfg, rng);
    m.layers.push_back(layer);
  }
  m.final_norm = ad::Tensor::full({cfg.d_model}, 1.0, true);
  m.dynamics = node::DynamicsParams::init(cfg.d_model, rng);
  m.head_w = vec(cfg.d_model);
  return m;
}

std::vector<std::pair<std::string, ad::Tensor>> Model::named_parameters() const {
  std::vector<std::pair<std::string, ad::Tensor>> out;
  out.emplace_back("embed.w", embed_w);
  out.emplace_back("embed.b", embed_b);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string base = "layer" + std::to_string(l) + ".";
    out.emplace_back(base + "norm_attn", layers[l].norm_attn);
    layers[l].attention.collect(base + "attn.", out);
    out.emplace_back(base + "norm_moe", layers[l].norm_moe);
    layers[l].moe.collect(base + "moe.", out);
  }
  out.emplace_back("final_norm", final_norm);
  dynamics.collect("ode.", out);
  out.emplace_back("head.w", head_w);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.size();
  return n;
}

ForwardResult forward(const Model& m, const std::vector<double>& values,
                      const std::vector<double>& timestamps) {
  const std::size_t L = values.size();
  if (L == 0) throw std::invalid_argument("forward: empty sequence");
  if (L > m.config.max_seq_len) {
    throw std::invalid_argument("forward: sequence length " + std::to_string(L) +
                                " exceeds max " + std::to_string(m.config.max_seq_len));
  }
  if (timestamps.size() != L) throw std::invalid_argument("forward: timestamp count mismatch");

  std::vector<double> rope_ts = timestamps;
  if (m.config.rope_mode == RopeMode::index) {
    for (std::size_t i = 0; i < L; ++i) rope_ts[i] = static_cast<double>(i);
  }

  ForwardResult res;
  ad::Tensor x = ad::embed_tokens(values, m.embed_w, m.embed_b);
  for (const DecoderLayer& layer : m.layers) {
    ad::Tensor a = attn::ctrope_attention(layer.attention,
                                          ad::rms_normalize(x, layer.norm_attn), rope_ts);
    x = ad::add(x, a);
    moe::MoEOutput mo = moe::moe_forward(layer.moe, ad::rms_normalize(x, layer.norm_moe));
    x = ad::add(x, mo.output);
    res.stats.push_back(std::move(mo.stats));
    res.aux.push_back(mo.aux);
  }
  res.latents = ad::rms_normalize(x, m.final_norm);
  return res;
}

ad::Tensor decode_latent(const Model& m, const ad::Tensor& latent, double t_from,
                         double t_to) {
  ad::Tensor z = latent;
  if (m.config.extrapolation == Extrapolation::ode) {
    z = node::ode_extrapolate(m.dynamics, z, t_from, t_to, m.config.solver,
                              m.config.grad_mode);
  }
  return ad::sum(ad::mul(m.head_w, z));
}

LossBreakdown teacher_forced_loss(const Model& m, const series::Window& w) {
  const std::size_t L = w.context_values.size();
  const std::size_t H = w.target_timestamps.size();
  if (L == 0) throw std::invalid_argument("teacher_forced_loss: empty context");
  if (H == 0) throw std::invalid_argument("teacher_forced_loss: empty horizon");

  std::vector<double> seq_values = w.context_values;
  std::vector<double> seq_ts = w.context_timestamps;
  std::vector<double> targets(H, 0.0);
  std::vector<std::uint8_t> valid(H, 0);
  std::size_t n_valid = 0;
  double carry = w.context_values.back();
  for (std::size_t j = 0; j < H; ++j) {
    const double v = w.target_values[j];
    if (series::is_missing(v)) {
      seq_values.push_back(carry);  // input token only; excluded from the loss
    } else {
      seq_values.push_back(v);
      targets[j] = v;
      valid[j] = 1;
      ++n_valid;
      carry = v;
    }
    seq_ts.push_back(w.target_timestamps[j]);
  }
  if (n_valid == 0) throw std::invalid_argument("teacher_forced_loss: no observed targets");

  ForwardResult fw = forward(m, seq_values, seq_ts);
  std::vector<ad::Tensor> preds;
  preds.reserve(H);
  LossBreakdown out;
  out.predictions.assign(H, series::kMissing);
  for (std::size_t j = 0; j < H; ++j) {
    const std::size_t src = L + j - 1;
    ad::Tensor p = decode_latent(m, ad::row(fw.latents, src), seq_ts[src],
                                 w.target_timestamps[j]);
    out.predictions[j] = p.value();
    preds.push_back(p);
  }
  ad::Tensor pred_vec = ad::concat_rows(preds);
  ad::Tensor huber = ad::huber_mean(pred_vec, targets, m.config.huber_delta, valid);
  out.huber = huber.value();
  out.total = huber;
  if (!m.config.dense_ffn && m.config.aux_weight > 0.0) {
    ad::Tensor aux_mean = ad::scale(
        ad::linear_combination(fw.aux, std::vector<double>(fw.aux.size(), 1.0)),
        1.0 / static_cast<double>(fw.aux.size()));
    out.aux = aux_mean.value();
    out.total = ad::add(huber, ad::scale(aux_mean, m.config.aux_weight));
  }
  out.stats = std::move(fw.stats);
  return out;
}

LossBreakdown rollout_loss(const Model& m, const series::Window& w) {
  const std::size_t L = w.context_values.size();
  const std::size_t H = w.target_timestamps.size();
  if (L == 0) throw std::invalid_argument("rollout_loss: empty context");
  if (H == 0) throw std::invalid_argument("rollout_loss: empty horizon");

  std::vector<double> targets(H, 0.0);
  std::vector<std::uint8_t> valid(H, 0);
  std::size_t n_valid = 0;
  for (std::size_t j = 0; j < H; ++j) {
    if (!series::is_missing(w.target_values[j])) {
      targets[j] = w.target_values[j];
      valid[j] = 1;
      ++n_valid;
    }
  }
  if (n_valid == 0) throw std::invalid_argument("rollout_loss: no observed targets");

  std::vector<double> seq_values = w.context_values;
  std::vector<double> seq_ts = w.context_timestamps;
  std::vector<ad::Tensor> preds;
  preds.reserve(H);
  LossBreakdown out;
  out.predictions.assign(H, series::kMissing);
  std::vector<ad::Tensor> aux_terms;
  for (std::size_t j = 0; j < H; ++j) {
    ForwardResult fw = forward(m, seq_values, seq_ts);
    const std::size_t last = seq_values.size() - 1;
    ad::Tensor p = decode_latent(m, ad::row(fw.latents, last), seq_ts.back(),
                                 w.target_timestamps[j]);
    out.predictions[j] = p.value();
    preds.push_back(p);
    seq_values.push_back(p.value());  // detached feedback
    seq_ts.push_back(w.target_timestamps[j]);
    if (!m.config.dense_ffn && m.config.aux_weight > 0.0) {
      for (ad::Tensor& a : fw.aux) aux_terms.push_back(a);
    }
    if (j == 0) out.stats = std::move(fw.stats);
  }
  ad::Tensor pred_vec = ad::concat_rows(preds);
  ad::Tensor huber = ad::huber_mean(pred_vec, targets, m.config.huber_delta, valid);
  out.huber = huber.value();
  out.total = huber;
  if (!aux_terms.empty()) {
    ad::Tensor aux_mean = ad::scale(
        ad::linear_combination(aux_terms, std::vector<double>(aux_terms.size(), 1.0)),
        1.0 / static_cast<double>(aux_terms.size()));
    out.aux = aux_mean.value();
    out.total = ad::add(huber, ad::scale(aux_mean, m.config.aux_weight));
  }
  return out;
}

std::vector<double> forecast(const Model& m, const std::vector<double>& context_values,
                             const std::vector<double>& context_timestamps,
                             const std::vector<double>& target_timestamps,
                             const series::NormStats& stats) {
  const std::size_t L = context_values.size();
  const std::size_t H = target_timestamps.size();
  if (L == 0) throw std::invalid_argument("forecast: empty context");
  if (context_timestamps.size() != L) {
    throw std::invalid_argument("forecast: context timestamp count mismatch");
  }
  if (H == 0) return {};
  double prev = context_timestamps.back();
  for (double t : target_timestamps) {
    if (!(t > prev)) {
      throw std::invalid_argument("forecast: target timestamps must be strictly "
                                  "increasing and after the context");
    }
    prev = t;
  }
  if (L + H > m.config.max_seq_len) {
    throw std::invalid_argument("forecast: context plus horizon exceeds max sequence length");
  }

  ad::NoGradScope no_grad;
  std::vector<double> seq_values(L);
  for (std::size_t i = 0; i < L; ++i) {
    seq_values[i] = (context_values[i] - stats.mean) / stats.std;
  }
  std::vector<double> seq_ts = context_timestamps;
  std::vector<double> out;
  out.reserve(H);
  for (std::size_t j = 0; j < H; ++j) {
    ForwardResult fw = forward(m, seq_values, seq_ts);
    const std::size_t last = seq_values.size() - 1;
    ad::Tensor p;
    try {
      p = decode_latent(m, ad::row(fw.latents, last), seq_ts.back(), target_timestamps[j]);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("forecast: step " + std::to_string(j) + ": " + e.what());
    }
    const double pred_norm = p.value();
    out.push_back(series::denormalize(pred_norm, stats));
    seq_values.push_back(pred_norm);
    seq_ts.push_back(target_timestamps[j]);
  }
  return out;
}

}  // namespace mira::model
