#include "mira/node.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mira/kernels.hpp"
#include "mira/ops.hpp"

namespace mira::node {

namespace {

// Dormand-Prince 5(4) tableau. Stage 7 equals the next step's stage 1 (FSAL).
constexpr double kC[7] = {0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0};
constexpr double kA[7][6] = {
    {},
    {1.0 / 5.0},
    {3.0 / 40.0, 9.0 / 40.0},
    {44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0},
    {19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0},
    {9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0},
    {35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0},
};
// 5th-order solution weights (k7 unused) and the 5th-minus-4th difference
// used for the embedded error estimate.
constexpr double kB5[7] = {35.0 / 384.0,     0.0,        500.0 / 1113.0, 125.0 / 192.0,
                           -2187.0 / 6784.0, 11.0 / 84.0, 0.0};
constexpr double kErr[7] = {35.0 / 384.0 - 5179.0 / 57600.0,
                            0.0,
                            500.0 / 1113.0 - 7571.0 / 16695.0,
                            125.0 / 192.0 - 393.0 / 640.0,
                            -2187.0 / 6784.0 + 92097.0 / 339200.0,
                            11.0 / 84.0 - 187.0 / 2100.0,
                            -1.0 / 40.0};

double initial_step(double span) { return std::min(span, 1e-2 * span + 1e-4); }

bool all_finite(const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

std::vector<double> rk45_impl(const OdeFn& f, std::vector<double> y, double s0, double s1,
                              const SolverConfig& cfg, SolveStats* stats,
                              std::vector<std::pair<double, double>>* accepted_steps) {
  cfg.validate();
  if (!(s1 >= s0)) {
    throw std::invalid_argument("rk45_integrate: target time " + std::to_string(s1) +
                                " before start " + std::to_string(s0));
  }
  if (!all_finite(y)) throw std::invalid_argument("rk45_integrate: non-finite initial state");
  SolveStats local;
  SolveStats& st = stats ? *stats : local;
  if (s1 == s0) return y;

  const std::size_t n = y.size();
  std::vector<std::vector<double>> k(7, std::vector<double>(n));
  std::vector<double> ytmp(n), ynew(n), err(n);
  double s = s0;
  double h = initial_step(s1 - s0);
  f(s, y.data(), k[0].data());
  std::size_t iterations = 0;
  while (s < s1) {
    if (iterations++ >= cfg.max_steps) {
      throw std::runtime_error("rk45_integrate: exceeded " + std::to_string(cfg.max_steps) +
                               " steps over [" + std::to_string(s0) + ", " +
                               std::to_string(s1) + "]; last accepted step " +
                               std::to_string(st.last_step));
    }
    h = std::min(h, s1 - s);
    for (std::size_t i = 1; i < 7; ++i) {
      ytmp = y;
      for (std::size_t j = 0; j < i; ++j) {
        if (kA[i][j] != 0.0) kernels::axpy(h * kA[i][j], k[j].data(), ytmp.data(), n);
      }
      if (i == 6) {
        ynew = ytmp;  // stage-7 node is the 5th-order solution itself
        f(s + h, ynew.data(), k[6].data());
      } else {
        f(s + kC[i] * h, ytmp.data(), k[i].data());
      }
    }
    double errnorm_sq = 0.0;
    bool finite = true;
    for (std::size_t j = 0; j < n; ++j) {
      double e = 0.0;
      for (std::size_t i = 0; i < 7; ++i) e += kErr[i] * k[i][j];
      e *= h;
      const double scale =
          cfg.atol + cfg.rtol * std::max(std::abs(y[j]), std::abs(ynew[j]));
      errnorm_sq += (e / scale) * (e / scale);
      if (!std::isfinite(ynew[j]) || !std::isfinite(e)) finite = false;
    }
    if (!finite) {
      throw std::runtime_error("rk45_integrate: non-finite state at s = " +
                               std::to_string(s) + ", step " + std::to_string(h));
    }
    const double errnorm = std::sqrt(errnorm_sq / static_cast<double>(n));
    if (errnorm <= 1.0) {
      if (accepted_steps != nullptr) accepted_steps->emplace_back(s, h);
      s += h;
      y.swap(ynew);
      k[0].swap(k[6]);  // FSAL
      st.steps_accepted += 1;
      st.last_step = h;
    } else {
      st.steps_rejected += 1;
    }
    const double factor =
        errnorm == 0.0 ? cfg.max_factor
                       : std::clamp(cfg.safety * std::pow(errnorm, -0.2), cfg.min_factor,
                                    cfg.max_factor);
    h *= factor;
  }
  return y;
}

}  // namespace

void SolverConfig::validate() const {
  if (!(rtol > 0.0) || !(atol > 0.0)) {
    throw std::invalid_argument("SolverConfig: tolerances must be positive");
  }
  if (max_steps == 0) throw std::invalid_argument("SolverConfig: max_steps must be >= 1");
  if (!(safety > 0.0 && safety <= 1.0) || !(min_factor > 0.0) ||
      !(max_factor > min_factor)) {
    throw std::invalid_argument("SolverConfig: bad step-control constants");
  }
}

std::vector<double> rk45_integrate(const OdeFn& f, std::vector<double> y0, double s0,
                                   double s1, const SolverConfig& config,
                                   SolveStats* stats) {
  return rk45_impl(f, std::move(y0), s0, s1, config, stats, nullptr);
}

DynamicsParams DynamicsParams::init(std::size_t dim, std::mt19937_64& rng,
                                    std::size_t hidden) {
  if (dim == 0) throw std::invalid_argument("DynamicsParams: dim must be positive");
  if (hidden == 0) hidden = dim;
  DynamicsParams p;
  p.dim = dim;
  p.hidden = hidden;
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(dim + 1)));
  p.w_time = ad::Tensor::zeros({hidden}, /*requires_grad=*/true);
  p.w_state = ad::Tensor::zeros({hidden, dim}, true);
  for (double& v : p.w_time.data()) v = dist(rng);
  for (double& v : p.w_state.data()) v = dist(rng);
  // Zero output weights make the initial dynamics the zero map, so the
  // untrained block is exactly the identity flow.
  p.w_out = ad::Tensor::zeros({dim, hidden}, true);
  return p;
}

void DynamicsParams::collect(const std::string& prefix,
                             std::vector<std::pair<std::string, ad::Tensor>>& out) const {
  out.emplace_back(prefix + "w_time", w_time);
  out.emplace_back(prefix + "w_state", w_state);
  out.emplace_back(prefix + "w_out", w_out);
}

void dynamics_eval(const DynamicsParams& params, double delta_s, const double* h,
                   double* out) {
  const std::size_t d = params.dim, hd = params.hidden;
  std::vector<double> z(hd);
  for (std::size_t i = 0; i < hd; ++i) {
    z[i] = std::tanh(delta_s * params.w_time.at(i) +
                     kernels::dot(params.w_state.data().data() + i * d, h, d));
  }
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = kernels::dot(params.w_out.data().data() + i * hd, z.data(), hd);
  }
}

ad::Tensor dynamics(const DynamicsParams& params, double delta_s, const ad::Tensor& h) {
  ad::Tensor pre = ad::add(ad::matvec(params.w_state, h), ad::affine(params.w_time, delta_s, 0.0));
  return ad::matvec(params.w_out, ad::tanh_(pre));
}

LatentState extrapolate(const DynamicsParams& params, const LatentState& state,
                        double t_target, const SolverConfig& config, SolveStats* stats) {
  if (state.h.size() != params.dim) {
    throw std::invalid_argument("extrapolate: state dimension mismatch");
  }
  if (!(t_target >= state.t)) {
    throw std::invalid_argument("extrapolate: target " + std::to_string(t_target) +
                                " before state time " + std::to_string(state.t));
  }
  OdeFn f = [&params](double s, const double* y, double* dy) {
    dynamics_eval(params, s, y, dy);
  };
  LatentState out;
  out.t = t_target;
  out.h = rk45_impl(f, state.h, 0.0, t_target - state.t, config, stats, nullptr);
  return out;
}

namespace {

// Right-hand side of the augmented backward system, in the reversed time
// tau = delta_t - sigma. Layout: [h, a, g_time, g_state, g_out].
struct AugmentedDynamics {
  const DynamicsParams* p;
  double delta_t;

  void operator()(double tau, const double* y, double* dy) const {
    const std::size_t d = p->dim, hd = p->hidden;
    const double sigma = delta_t - tau;
    const double* h = y;
    const double* a = y + d;
    double* dh = dy;
    double* da = dy + d;
    double* dg_time = dy + 2 * d;
    double* dg_state = dy + 2 * d + hd;
    double* dg_out = dy + 2 * d + hd + hd * d;

    std::vector<double> pre(hd), z(hd), r(hd);
    for (std::size_t i = 0; i < hd; ++i) {
      pre[i] = sigma * p->w_time.at(i) +
               kernels::dot(p->w_state.data().data() + i * d, h, d);
      z[i] = std::tanh(pre[i]);
    }
    // dh/dtau = -f(sigma, h)
    for (std::size_t i = 0; i < d; ++i) {
      dh[i] = -kernels::dot(p->w_out.data().data() + i * hd, z.data(), hd);
    }
    // r = (W_out^T a) .* (1 - z^2)
    for (std::size_t i = 0; i < hd; ++i) {
      double q = 0.0;
      for (std::size_t j = 0; j < d; ++j) q += p->w_out.at(j, i) * a[j];
      r[i] = q * (1.0 - z[i] * z[i]);
    }
    // da/dtau = +(df/dh)^T a = W_state^T r
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < hd; ++i) acc += p->w_state.at(i, j) * r[i];
      da[j] = acc;
    }
    // Parameter-gradient integrands: +(df/dtheta)^T a.
    for (std::size_t i = 0; i < hd; ++i) {
      dg_time[i] = r[i] * sigma;
      for (std::size_t j = 0; j < d; ++j) dg_state[i * d + j] = r[i] * h[j];
    }
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < hd; ++j) dg_out[i * hd + j] = a[i] * z[j];
    }
  }
};

}  // namespace

AdjointResult adjoint_backward(const DynamicsParams& params, const LatentState& state,
                               double t_target, const std::vector<double>& end_state,
                               const std::vector<double>& loss_grad,
                               const SolverConfig& config) {
  const std::size_t d = params.dim, hd = params.hidden;
  if (end_state.size() != d || loss_grad.size() != d) {
    throw std::invalid_argument("adjoint_backward: dimension mismatch");
  }
  if (!(t_target >= state.t)) {
    throw std::invalid_argument("adjoint_backward: target before state time");
  }
  const double delta_t = t_target - state.t;
  AdjointResult res;
  if (delta_t == 0.0) {
    res.grad_h = loss_grad;
    res.grad_w_time.assign(hd, 0.0);
    res.grad_w_state.assign(hd * d, 0.0);
    res.grad_w_out.assign(d * hd, 0.0);
    return res;
  }
  std::vector<double> y(2 * d + hd + hd * d + d * hd, 0.0);
  std::copy(end_state.begin(), end_state.end(), y.begin());
  std::copy(loss_grad.begin(), loss_grad.end(), y.begin() + d);
  AugmentedDynamics aug{&params, delta_t};
  OdeFn f = [&aug](double tau, const double* yy, double* dy) { aug(tau, yy, dy); };
  y = rk45_impl(f, std::move(y), 0.0, delta_t, config, nullptr, nullptr);
  res.grad_h.assign(y.begin() + d, y.begin() + 2 * d);
  res.grad_w_time.assign(y.begin() + 2 * d, y.begin() + 2 * d + hd);
  res.grad_w_state.assign(y.begin() + 2 * d + hd, y.begin() + 2 * d + hd + hd * d);
  res.grad_w_out.assign(y.begin() + 2 * d + hd + hd * d, y.end());
  return res;
}

namespace {

ad::Tensor taped_replay(const DynamicsParams& params, const ad::Tensor& h0,
                        const std::vector<std::pair<double, double>>& steps) {
  ad::Tensor y = h0;
  std::vector<ad::Tensor> k(6);
  for (const auto& [s, hs] : steps) {
    for (std::size_t i = 0; i < 6; ++i) {
      std::vector<ad::Tensor> terms{y};
      std::vector<double> coeffs{1.0};
      for (std::size_t j = 0; j < i; ++j) {
        if (kA[i][j] != 0.0) {
          terms.push_back(k[j]);
          coeffs.push_back(hs * kA[i][j]);
        }
      }
      ad::Tensor yi = terms.size() == 1 ? y : ad::linear_combination(terms, coeffs);
      k[i] = dynamics(params, s + kC[i] * hs, yi);
    }
    std::vector<ad::Tensor> terms{y};
    std::vector<double> coeffs{1.0};
    for (std::size_t i = 0; i < 6; ++i) {
      if (kB5[i] != 0.0) {
        terms.push_back(k[i]);
        coeffs.push_back(hs * kB5[i]);
      }
    }
    y = ad::linear_combination(terms, coeffs);
  }
  return y;
}

}  // namespace

ad::Tensor ode_extrapolate(const DynamicsParams& params, const ad::Tensor& h, double t0,
                           double t1, const SolverConfig& config, GradMode mode) {
  if (h.shape().size() != 1 || h.size() != params.dim) {
    throw std::invalid_argument("ode_extrapolate: expected state of shape [" +
                                std::to_string(params.dim) + "], got " +
                                ad::shape_string(h.shape()));
  }
  if (!(t1 >= t0)) {
    throw std::invalid_argument("ode_extrapolate: target " + std::to_string(t1) +
                                " before start " + std::to_string(t0));
  }
  const double delta_t = t1 - t0;
  if (delta_t == 0.0) return ad::affine(h, 1.0, 0.0);

  OdeFn f = [&params](double s, const double* y, double* dy) {
    dynamics_eval(params, s, y, dy);
  };

  if (mode == GradMode::backprop) {
    std::vector<std::pair<double, double>> steps;
    {
      ad::NoGradScope ng;
      rk45_impl(f, h.data(), 0.0, delta_t, config, nullptr, &steps);
    }
    return taped_replay(params, h, steps);
  }

  std::vector<double> end = rk45_impl(f, h.data(), 0.0, delta_t, config, nullptr, nullptr);
  ad::Tensor out = ad::Tensor::from_vector(end);
  const bool tracked = h.requires_grad() || params.w_time.requires_grad() ||
                       params.w_state.requires_grad() || params.w_out.requires_grad();
  if (ad::active_tape() != nullptr && tracked) {
    ad::Tensor hc = h, oc = out;
    DynamicsParams pc = params;  // shares the parameter tensors
    SolverConfig cfg = config;
    out.set_requires_grad(true);
    ad::active_tape()->record([hc, oc, pc, cfg, delta_t, end]() mutable {
      if (!oc.has_grad()) return;
      LatentState start{hc.data(), 0.0};
      AdjointResult adj = adjoint_backward(pc, start, delta_t, end, oc.grad(), cfg);
      auto add_into = [](ad::Tensor& t, const std::vector<double>& g) {
        if (!t.requires_grad()) return;
        t.impl()->ensure_grad();
        kernels::axpy(1.0, g.data(), t.grad().data(), g.size());
      };
      add_into(hc, adj.grad_h);
      add_into(pc.w_time, adj.grad_w_time);
      add_into(pc.w_state, adj.grad_w_state);
      add_into(pc.w_out, adj.grad_w_out);
    });
  }
  return out;
}

double spectral_norm_estimate(const double* a, std::size_t rows, std::size_t cols,
                              std::vector<double>& u, std::vector<double>& v,
                              int iterations) {
  if (iterations < 1) throw std::invalid_argument("spectral_norm_estimate: iterations >= 1");
  auto norm = [](std::vector<double>& x) {
    double s = std::sqrt(kernels::dot(x.data(), x.data(), x.size()));
    if (s > 0.0) {
      for (double& e : x) e /= s;
    }
    return s;
  };
  if (v.size() != cols) {
    v.assign(cols, 1.0 / std::sqrt(static_cast<double>(cols)));
  }
  if (u.size() != rows) u.assign(rows, 0.0);
  double sigma = 0.0;
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < rows; ++i) u[i] = kernels::dot(a + i * cols, v.data(), cols);
    if (norm(u) == 0.0) return 0.0;  // zero (or degenerate) matrix
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < rows; ++i) acc += a[i * cols + j] * u[i];
      v[j] = acc;
    }
    sigma = norm(v);
    if (sigma == 0.0) return 0.0;
  }
  return sigma;
}

void spectral_normalize(DynamicsParams& params, SpectralNormState& state, int iterations) {
  const std::size_t d = params.dim, hd = params.hidden;
  // Combined input matrix [w_time | w_state] of shape [hidden, dim + 1].
  std::vector<double> w_in(hd * (d + 1));
  for (std::size_t i = 0; i < hd; ++i) {
    w_in[i * (d + 1)] = params.w_time.at(i);
    for (std::size_t j = 0; j < d; ++j) {
      w_in[i * (d + 1) + 1 + j] = params.w_state.at(i, j);
    }
  }
  state.sigma_in = spectral_norm_estimate(w_in.data(), hd, d + 1, state.u_in, state.v_in,
                                          iterations);
  if (state.sigma_in > 1.0) {
    const double inv = 1.0 / state.sigma_in;
    for (double& x : params.w_time.data()) x *= inv;
    for (double& x : params.w_state.data()) x *= inv;
  }
  state.sigma_out = spectral_norm_estimate(params.w_out.data().data(), d, hd, state.u_out,
                                           state.v_out, iterations);
  if (state.sigma_out > 1.0) {
    const double inv = 1.0 / state.sigma_out;
    for (double& x : params.w_out.data()) x *= inv;
  }
}

}  // namespace mira::node
