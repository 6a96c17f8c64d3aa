#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mira/model.hpp"
#include "mira/series.hpp"

// Training loop (adaptive-moment optimizer with gradient clipping), metric
// computation against a last-value-carried-forward baseline, missing-rate
// robustness sweeps, ablation toggles, and expert-gating reports. Every
// operation is a pure function of (seed, config, data).

namespace mira::harness {

struct TrainConfig {
  std::size_t steps = 500;
  std::size_t batch = 16;  // windows per optimizer step
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // global gradient-norm clip; <= 0 disables
  bool rollout = false;    // free-running rollout loss instead of teacher forcing
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossPoint {
  std::size_t step = 0;
  double total = 0.0;
  double huber = 0.0;
  double aux = 0.0;  // unweighted mean over layers
};

// Adaptive moment estimation with bias correction.
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, ad::Tensor>> params, const TrainConfig& cfg);

  // Applies one update from the accumulated gradients, then clears them.
  // Returns the pre-clip global gradient norm.
  double step();

 private:
  std::vector<std::pair<std::string, ad::Tensor>> params_;
  TrainConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

// Windows must be pre-normalized (see series::normalize). Samples `batch`
// windows per step, averages gradients, clips, and updates. Throws on a
// non-finite loss, naming the step and component breakdown.
std::vector<LossPoint> train(model::Model& m, const std::vector<series::Window>& windows,
                             const TrainConfig& cfg);

struct EvalReport {
  double rmse = 0.0;
  double mae = 0.0;
  double baseline_rmse = 0.0;  // last-value-carried-forward
  double baseline_mae = 0.0;
  std::size_t points = 0;  // observed target points evaluated
};

// Windows are raw (unnormalized); each is normalized from its own context,
// forecast free-running, and scored in original units over observed targets.
EvalReport evaluate(const model::Model& m, const std::vector<series::Window>& windows);

struct SweepRow {
  double rate = 0.0;
  EvalReport report;
};

std::vector<SweepRow> robustness_sweep(const model::Model& m,
                                       const series::IrregularSeries& s,
                                       const std::vector<double>& rates,
                                       const series::WindowOptions& opts,
                                       std::uint64_t seed);

struct AblationResult {
  std::string label;  // base | no_ctrope | dense_ffn | identity_extrapolation
  EvalReport report;
  std::vector<LossPoint> curve;
};

// Trains the base configuration plus one variant per toggle, all under the
// same seed and budget, and evaluates each on the same held-out windows.
std::vector<AblationResult> ablation(const model::ModelConfig& base,
                                     const std::vector<std::string>& toggles,
                                     const std::vector<series::Window>& train_windows,
                                     const std::vector<series::Window>& eval_windows,
                                     const TrainConfig& cfg);

model::ModelConfig apply_toggle(model::ModelConfig cfg, const std::string& toggle);

struct GatingRow {
  std::size_t layer = 0;
  std::size_t expert = 0;
  double selection_fraction = 0.0;  // sums to 1 per layer
  double mean_score = 0.0;
};

// Aggregated routing statistics over the context tokens of all windows.
std::vector<GatingRow> gating_report(const model::Model& m,
                                     const std::vector<series::Window>& windows);

// Mean of the trailing `window` entries' total loss.
double smoothed_loss(const std::vector<LossPoint>& curve, std::size_t window,
                     std::size_t end);

// CSV writers (deterministic %.17g formatting).
void write_loss_curve_csv(const std::string& path, const std::vector<LossPoint>& curve);
void write_eval_csv(const std::string& path, const EvalReport& report);
void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);
void write_gating_csv(const std::string& path, const std::vector<GatingRow>& rows);

}  // namespace mira::harness
