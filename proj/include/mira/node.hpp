#pragma once

#include <cstddef>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mira/tensor.hpp"

// Continuous dynamics extrapolation: a two-layer tanh network defines
// dh/ds = f(delta_s, h), integrated with an adaptive Dormand-Prince RK45
// solver from the last observed timestamp to an arbitrary target. Gradients
// come either from the adjoint method (a backward ODE for dL/dh plus
// parameter-gradient integrals) or from backpropagating through the solver
// steps; the latter doubles as the test oracle for the former. Optional
// spectral normalization keeps the dynamics contractive.

namespace mira::node {

struct SolverConfig {
  double rtol = 1e-6;
  double atol = 1e-6;
  double safety = 0.9;
  double min_factor = 0.2;
  double max_factor = 5.0;
  std::size_t max_steps = 10000;

  void validate() const;
};

struct SolveStats {
  std::size_t steps_accepted = 0;
  std::size_t steps_rejected = 0;
  double last_step = 0.0;
};

// f(delta_s, h) = w_out * tanh(delta_s * w_time + w_state * h); bias-free.
// w_out starts at zero so the untrained block is the identity flow.
struct DynamicsParams {
  std::size_t dim = 0;     // state dimension
  std::size_t hidden = 0;  // hidden width (defaults to dim)
  ad::Tensor w_time;       // [hidden]
  ad::Tensor w_state;      // [hidden, dim]
  ad::Tensor w_out;        // [dim, hidden]

  static DynamicsParams init(std::size_t dim, std::mt19937_64& rng, std::size_t hidden = 0);
  void collect(const std::string& prefix,
               std::vector<std::pair<std::string, ad::Tensor>>& out) const;
};

// Raw (untaped) evaluation; `out` has length dim.
void dynamics_eval(const DynamicsParams& params, double delta_s, const double* h,
                   double* out);

// Taped evaluation for gradient checks and backprop-through-solver.
ad::Tensor dynamics(const DynamicsParams& params, double delta_s, const ad::Tensor& h);

struct LatentState {
  std::vector<double> h;
  double t = 0.0;
};

// Generic adaptive RK45 on dy/ds = f(s, y) over [s0, s1], s1 >= s0.
using OdeFn = std::function<void(double s, const double* y, double* dy)>;
std::vector<double> rk45_integrate(const OdeFn& f, std::vector<double> y0, double s0,
                                   double s1, const SolverConfig& config,
                                   SolveStats* stats = nullptr);

// Solves Eq.-of-motion forward from state.t to t_target (>= state.t).
LatentState extrapolate(const DynamicsParams& params, const LatentState& state,
                        double t_target, const SolverConfig& config,
                        SolveStats* stats = nullptr);

struct AdjointResult {
  std::vector<double> grad_h;        // dL/dh(state.t)
  std::vector<double> grad_w_time;   // dL/dtheta, laid out like the tensors
  std::vector<double> grad_w_state;
  std::vector<double> grad_w_out;
};

// Integrates the adjoint ODE backward from t_target to state.t, given the
// loss gradient at the target. Requires the forward solution's end state.
AdjointResult adjoint_backward(const DynamicsParams& params, const LatentState& state,
                               double t_target, const std::vector<double>& end_state,
                               const std::vector<double>& loss_grad,
                               const SolverConfig& config);

enum class GradMode { adjoint, backprop };

// Differentiable extrapolation of a latent vector h (shape [dim]) from t0 to
// t1. In adjoint mode the forward pass is untaped and one tape record runs
// the adjoint integration; in backprop mode every solver stage is taped.
ad::Tensor ode_extrapolate(const DynamicsParams& params, const ad::Tensor& h, double t0,
                           double t1, const SolverConfig& config,
                           GradMode mode = GradMode::adjoint);

struct SpectralNormState {
  // Power-iteration vectors for the combined input matrix [w_time | w_state]
  // and for w_out, plus the latest singular-value estimates.
  std::vector<double> u_in, v_in, u_out, v_out;
  double sigma_in = 0.0;
  double sigma_out = 0.0;
};

// One-sided power iteration; u/v persist across calls and warm-start.
double spectral_norm_estimate(const double* a, std::size_t rows, std::size_t cols,
                              std::vector<double>& u, std::vector<double>& v,
                              int iterations);

// Divides each weight matrix by its sigma estimate when that exceeds 1.
void spectral_normalize(DynamicsParams& params, SpectralNormState& state,
                        int iterations = 1);

}  // namespace mira::node
