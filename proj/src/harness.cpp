#include "mira/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <stdexcept>

#include "mira/kernels.hpp"
#include "mira/ops.hpp"

namespace mira::harness {

void TrainConfig::validate() const {
  if (steps == 0) throw std::invalid_argument("TrainConfig: steps must be >= 1");
  if (batch == 0) throw std::invalid_argument("TrainConfig: batch must be >= 1");
  if (lr < 0.0) throw std::invalid_argument("TrainConfig: negative learning rate");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("TrainConfig: moment coefficients must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("TrainConfig: eps must be positive");
}

Adam::Adam(std::vector<std::pair<std::string, ad::Tensor>> params, const TrainConfig& cfg)
    : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  for (const auto& [name, p] : params_) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

double Adam::step() {
  ++t_;
  double norm_sq = 0.0;
  for (const auto& [name, p] : params_) {
    if (!p.has_grad()) continue;
    norm_sq += kernels::dot(p.grad().data(), p.grad().data(), p.size());
  }
  const double norm = std::sqrt(norm_sq);
  double scale = 1.0;
  if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;

  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ad::Tensor& p = params_[i].second;
    if (!p.has_grad()) continue;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = p.grad()[j] * scale;
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * g;
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      p.data()[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
    p.zero_grad();
  }
  return norm;
}

std::vector<LossPoint> train(model::Model& m, const std::vector<series::Window>& windows,
                             const TrainConfig& cfg) {
  cfg.validate();
  if (windows.empty()) throw std::invalid_argument("train: no training windows");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, windows.size() - 1);
  Adam opt(m.named_parameters(), cfg);

  std::vector<LossPoint> curve;
  curve.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    LossPoint point;
    point.step = step;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const series::Window& w = windows[pick(rng)];
      ad::Tape tape;
      ad::TapeScope scope(tape);
      model::LossBreakdown loss =
          cfg.rollout ? model::rollout_loss(m, w) : model::teacher_forced_loss(m, w);
      // Scale so accumulated gradients average over the batch.
      ad::Tensor scaled = ad::scale(loss.total, 1.0 / static_cast<double>(cfg.batch));
      tape.backward(scaled);
      point.total += loss.total.value() / static_cast<double>(cfg.batch);
      point.huber += loss.huber / static_cast<double>(cfg.batch);
      point.aux += loss.aux / static_cast<double>(cfg.batch);
    }
    if (!std::isfinite(point.total)) {
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                               " (huber " + std::to_string(point.huber) + ", aux " +
                               std::to_string(point.aux) + ")");
    }
    opt.step();
    if (m.config.spectral_norm) node::spectral_normalize(m.dynamics, m.sn_state);
    curve.push_back(point);
  }
  return curve;
}

EvalReport evaluate(const model::Model& m, const std::vector<series::Window>& windows) {
  if (windows.empty()) throw std::invalid_argument("evaluate: no windows");
  double se = 0.0, ae = 0.0, base_se = 0.0, base_ae = 0.0;
  std::size_t n = 0;
  for (const series::Window& raw : windows) {
    series::Window w = raw;
    const series::NormStats stats = series::normalize(w);
    const std::vector<double> preds =
        model::forecast(m, raw.context_values, raw.context_timestamps,
                        raw.target_timestamps, stats);
    const double lvcf = raw.context_values.back();
    for (std::size_t j = 0; j < raw.target_values.size(); ++j) {
      const double truth = raw.target_values[j];
      if (series::is_missing(truth)) continue;
      const double e = preds[j] - truth;
      const double be = lvcf - truth;
      se += e * e;
      ae += std::abs(e);
      base_se += be * be;
      base_ae += std::abs(be);
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("evaluate: all targets missing");
  EvalReport r;
  r.points = n;
  r.rmse = std::sqrt(se / static_cast<double>(n));
  r.mae = ae / static_cast<double>(n);
  r.baseline_rmse = std::sqrt(base_se / static_cast<double>(n));
  r.baseline_mae = base_ae / static_cast<double>(n);
  return r;
}

std::vector<SweepRow> robustness_sweep(const model::Model& m,
                                       const series::IrregularSeries& s,
                                       const std::vector<double>& rates,
                                       const series::WindowOptions& opts,
                                       std::uint64_t seed) {
  std::vector<SweepRow> rows;
  for (double rate : rates) {
    if (rate < 0.0 || rate > 0.9) {
      throw std::invalid_argument("robustness_sweep: rate " + std::to_string(rate) +
                                  " outside [0, 0.9]");
    }
    const series::IrregularSeries masked = series::mask_random(s, rate, seed);
    SweepRow row;
    row.rate = rate;
    row.report = evaluate(m, series::make_windows(masked, opts));
    rows.push_back(row);
  }
  return rows;
}

model::ModelConfig apply_toggle(model::ModelConfig cfg, const std::string& toggle) {
  if (toggle == "no_ctrope") {
    cfg.rope_mode = model::RopeMode::index;
  } else if (toggle == "dense_ffn") {
    cfg.dense_ffn = true;
  } else if (toggle == "identity_extrapolation") {
    cfg.extrapolation = model::Extrapolation::identity;
  } else {
    throw std::invalid_argument("unknown ablation toggle '" + toggle +
                                "' (no_ctrope|dense_ffn|identity_extrapolation)");
  }
  return cfg;
}

std::vector<AblationResult> ablation(const model::ModelConfig& base,
                                     const std::vector<std::string>& toggles,
                                     const std::vector<series::Window>& train_windows,
                                     const std::vector<series::Window>& eval_windows,
                                     const TrainConfig& cfg) {
  std::vector<std::pair<std::string, model::ModelConfig>> variants;
  variants.emplace_back("base", base);
  for (const std::string& t : toggles) variants.emplace_back(t, apply_toggle(base, t));

  std::vector<AblationResult> results;
  for (const auto& [label, mc] : variants) {
    model::Model m = model::Model::init(mc, cfg.seed);
    AblationResult res;
    res.label = label;
    res.curve = train(m, train_windows, cfg);
    res.report = evaluate(m, eval_windows);
    results.push_back(std::move(res));
  }
  return results;
}

std::vector<GatingRow> gating_report(const model::Model& m,
                                     const std::vector<series::Window>& windows) {
  if (windows.empty()) throw std::invalid_argument("gating_report: no windows");
  if (m.config.dense_ffn) {
    throw std::invalid_argument("gating_report: dense-FFN model has no router");
  }
  const std::size_t layers = m.config.layers;
  const std::size_t n = m.config.n_experts;
  std::vector<double> frac(layers * n, 0.0), score(layers * n, 0.0);
  std::size_t total_tokens = 0;
  ad::NoGradScope no_grad;
  for (const series::Window& raw : windows) {
    series::Window w = raw;
    series::normalize(w);
    model::ForwardResult fw = model::forward(m, w.context_values, w.context_timestamps);
    const std::size_t tokens = w.context_values.size();
    for (std::size_t l = 0; l < layers; ++l) {
      for (std::size_t e = 0; e < n; ++e) {
        frac[l * n + e] += fw.stats[l].selection_fraction[e] * static_cast<double>(tokens);
        score[l * n + e] += fw.stats[l].mean_score[e] * static_cast<double>(tokens);
      }
    }
    total_tokens += tokens;
  }
  std::vector<GatingRow> rows;
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t e = 0; e < n; ++e) {
      GatingRow row;
      row.layer = l;
      row.expert = e;
      row.selection_fraction = frac[l * n + e] / static_cast<double>(total_tokens);
      row.mean_score = score[l * n + e] / static_cast<double>(total_tokens);
      rows.push_back(row);
    }
  }
  return rows;
}

double smoothed_loss(const std::vector<LossPoint>& curve, std::size_t window,
                     std::size_t end) {
  if (curve.empty() || window == 0 || end > curve.size() || end < window) {
    throw std::invalid_argument("smoothed_loss: bad window");
  }
  double acc = 0.0;
  for (std::size_t i = end - window; i < end; ++i) acc += curve[i].total;
  return acc / static_cast<double>(window);
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_loss_curve_csv(const std::string& path, const std::vector<LossPoint>& curve) {
  std::ofstream out = open_out(path);
  out << "step,total,huber,aux\n";
  for (const LossPoint& p : curve) {
    out << p.step << ',' << fmt(p.total) << ',' << fmt(p.huber) << ',' << fmt(p.aux)
        << '\n';
  }
}

void write_eval_csv(const std::string& path, const EvalReport& r) {
  std::ofstream out = open_out(path);
  out << "rmse,mae,baseline_rmse,baseline_mae,points\n";
  out << fmt(r.rmse) << ',' << fmt(r.mae) << ',' << fmt(r.baseline_rmse) << ','
      << fmt(r.baseline_mae) << ',' << r.points << '\n';
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  std::ofstream out = open_out(path);
  out << "rate,rmse,mae,baseline_rmse,baseline_mae,points\n";
  for (const SweepRow& r : rows) {
    out << fmt(r.rate) << ',' << fmt(r.report.rmse) << ',' << fmt(r.report.mae) << ','
        << fmt(r.report.baseline_rmse) << ',' << fmt(r.report.baseline_mae) << ','
        << r.report.points << '\n';
  }
}

void write_gating_csv(const std::string& path, const std::vector<GatingRow>& rows) {
  std::ofstream out = open_out(path);
  out << "layer,expert,selection_fraction,mean_score\n";
  for (const GatingRow& r : rows) {
    out << r.layer << ',' << r.expert << ',' << fmt(r.selection_fraction) << ','
        << fmt(r.mean_score) << '\n';
  }
}

}  // namespace mira::harness
