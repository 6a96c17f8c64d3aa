#include "mira/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "mira/kernels.hpp"

namespace mira::ad {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_string(a.shape()) + " vs " +
                                      shape_string(b.shape()));
}

bool tracked(const Tensor& t) { return t.requires_grad(); }

// Marks an op output as gradient-carrying and pushes its VJP.
void record(Tensor& out, std::function<void()> fn) {
  out.set_requires_grad(true);
  active_tape()->record(std::move(fn));
}

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (tracked(*t)) return true;
  }
  return false;
}

}  // namespace

bool grad_will_flow(const Tensor& t) { return tracked(t); }

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.shape().size() == 2 && b.shape().size() == 2 && a.cols() == b.rows(),
          "matmul: incompatible shapes " + shape_string(a.shape()) + " * " +
              shape_string(b.shape()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n});
  kernels::matmul_nn(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  if (recording({&a, &b})) {
    Tensor ac = a, bc = b, oc = out;
    record(out, [ac, bc, oc, m, k, n]() mutable {
      if (!oc.has_grad()) return;
      const double* g = oc.grad().data();
      if (tracked(ac)) {
        ac.impl()->ensure_grad();  // dA += G * B^T
        kernels::matmul_nt(g, bc.data().data(), ac.grad().data(), m, n, k);
      }
      if (tracked(bc)) {
        bc.impl()->ensure_grad();  // dB += A^T * G
        kernels::matmul_tn(ac.data().data(), g, bc.grad().data(), k, m, n);
      }
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(a.shape().size() == 2 && b.shape().size() == 2 && a.cols() == b.cols(),
          "matmul_nt: incompatible shapes " + shape_string(a.shape()) + " * " +
              shape_string(b.shape()) + "^T");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Tensor out = Tensor::zeros({m, n});
  kernels::matmul_nt(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  if (recording({&a, &b})) {
    Tensor ac = a, bc = b, oc = out;
    record(out, [ac, bc, oc, m, k, n]() mutable {
      if (!oc.has_grad()) return;
      const double* g = oc.grad().data();
      if (tracked(ac)) {
        ac.impl()->ensure_grad();  // dA += G * B
        kernels::matmul_nn(g, bc.data().data(), ac.grad().data(), m, n, k);
      }
      if (tracked(bc)) {
        bc.impl()->ensure_grad();  // dB += G^T * A
        kernels::matmul_tn(g, ac.data().data(), bc.grad().data(), n, m, k);
      }
    });
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require(a.shape().size() == 2 && b.shape().size() == 2 && a.rows() == b.rows(),
          "matmul_tn: incompatible shapes " + shape_string(a.shape()) + "^T * " +
              shape_string(b.shape()));
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros({m, n});
  kernels::matmul_tn(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  if (recording({&a, &b})) {
    Tensor ac = a, bc = b, oc = out;
    record(out, [ac, bc, oc, m, k, n]() mutable {
      if (!oc.has_grad()) return;
      const double* g = oc.grad().data();
      if (tracked(ac)) {
        ac.impl()->ensure_grad();  // dA += B * G^T
        kernels::matmul_nt(bc.data().data(), g, ac.grad().data(), k, n, m);
      }
      if (tracked(bc)) {
        bc.impl()->ensure_grad();  // dB += A * G
        kernels::matmul_nn(ac.data().data(), g, bc.grad().data(), k, m, n);
      }
    });
  }
  return out;
}

Tensor matvec(const Tensor& w, const Tensor& x) {
  require(w.shape().size() == 2 && x.shape().size() == 1 && w.cols() == x.size(),
          "matvec: incompatible shapes " + shape_string(w.shape()) + " * " +
              shape_string(x.shape()));
  const std::size_t m = w.rows(), n = w.cols();
  Tensor out = Tensor::zeros({m});
  for (std::size_t i = 0; i < m; ++i) {
    out.at(i) = kernels::dot(w.data().data() + i * n, x.data().data(), n);
  }
  if (recording({&w, &x})) {
    Tensor wc = w, xc = x, oc = out;
    record(out, [wc, xc, oc, m, n]() mutable {
      if (!oc.has_grad()) return;
      const double* g = oc.grad().data();
      if (tracked(wc)) {
        wc.impl()->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          kernels::axpy(g[i], xc.data().data(), wc.grad().data() + i * n, n);
        }
      }
      if (tracked(xc)) {
        xc.impl()->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          kernels::axpy(g[i], wc.data().data() + i * n, xc.grad().data(), n);
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

Tensor binary_same_shape(const Tensor& a, const Tensor& b, const char* name,
                         void (*fwd)(const double*, const double*, double*, std::size_t),
                         double sign_b) {
  require_same_shape(a, b, name);
  Tensor out = Tensor::zeros(a.shape());
  fwd(a.data().data(), b.data().data(), out.data().data(), a.size());
  if (recording({&a, &b})) {
    Tensor ac = a, bc = b, oc = out;
    record(out, [ac, bc, oc, sign_b]() mutable {
      if (!oc.has_grad()) return;
      if (tracked(ac)) {
        ac.impl()->ensure_grad();
        kernels::axpy(1.0, oc.grad().data(), ac.grad().data(), ac.size());
      }
      if (tracked(bc)) {
        bc.impl()->ensure_grad();
        kernels::axpy(sign_b, oc.grad().data(), bc.grad().data(), bc.size());
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_same_shape(a, b, "add", &kernels::add, 1.0);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_same_shape(a, b, "sub", &kernels::sub, -1.0);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  kernels::mul(a.data().data(), b.data().data(), out.data().data(), a.size());
  if (recording({&a, &b})) {
    Tensor ac = a, bc = b, oc = out;
    record(out, [ac, bc, oc]() mutable {
      if (!oc.has_grad()) return;
      const std::size_t n = oc.size();
      if (tracked(ac)) {
        ac.impl()->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) ac.grad()[i] += oc.grad()[i] * bc.data()[i];
      }
      if (tracked(bc)) {
        bc.impl()->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) bc.grad()[i] += oc.grad()[i] * ac.data()[i];
      }
    });
  }
  return out;
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  require(x.shape().size() == 2 && bias.shape().size() == 1 && x.cols() == bias.size(),
          "add_bias: shape mismatch " + shape_string(x.shape()) + " + " +
              shape_string(bias.shape()));
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    kernels::add(x.data().data() + i * n, bias.data().data(),
                 out.data().data() + i * n, n);
  }
  if (recording({&x, &bias})) {
    Tensor xc = x, bc = bias, oc = out;
    record(out, [xc, bc, oc, m, n]() mutable {
      if (!oc.has_grad()) return;
      if (tracked(xc)) {
        xc.impl()->ensure_grad();
        kernels::axpy(1.0, oc.grad().data(), xc.grad().data(), m * n);
      }
      if (tracked(bc)) {
        bc.impl()->ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
          kernels::axpy(1.0, oc.grad().data() + i * n, bc.grad().data(), n);
        }
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double c) { return affine(x, c, 0.0); }

Tensor add_scalar(const Tensor& x, double c) { return affine(x, 1.0, c); }

Tensor affine(const Tensor& x, double a, double b) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = a * x.data()[i] + b;
  if (recording({&x})) {
    Tensor xc = x, oc = out;
    record(out, [xc, oc, a]() mutable {
      if (!oc.has_grad() || !tracked(xc)) return;
      xc.impl()->ensure_grad();
      kernels::axpy(a, oc.grad().data(), xc.grad().data(), xc.size());
    });
  }
  return out;
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  require(s.is_scalar(), "scale_by: gate must be scalar, got " + shape_string(s.shape()));
  const double sv = s.value();
  Tensor out = Tensor::zeros(x.shape());
  kernels::scale(x.data().data(), sv, out.data().data(), x.size());
  if (recording({&x, &s})) {
    Tensor xc = x, sc = s, oc = out;
    record(out, [xc, sc, oc, sv]() mutable {
      if (!oc.has_grad()) return;
      if (tracked(xc)) {
        xc.impl()->ensure_grad();
        kernels::axpy(sv, oc.grad().data(), xc.grad().data(), xc.size());
      }
      if (tracked(sc)) {
        sc.impl()->ensure_grad();
        sc.grad()[0] += kernels::dot(oc.grad().data(), xc.data().data(), xc.size());
      }
    });
  }
  return out;
}

namespace {

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv_from_output) {
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = fwd(x.data()[i]);
  if (recording({&x})) {
    Tensor xc = x, oc = out;
    record(out, [xc, oc, deriv_from_output]() mutable {
      if (!oc.has_grad() || !tracked(xc)) return;
      xc.impl()->ensure_grad();
      for (std::size_t i = 0; i < xc.size(); ++i) {
        xc.grad()[i] += oc.grad()[i] * deriv_from_output(oc.data()[i]);
      }
    });
  }
  return out;
}

}  // namespace

Tensor exp_(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double y) { return y; });
}

Tensor tanh_(const Tensor& x) {
  return unary(x, [](double v) { return std::tanh(v); },
               [](double y) { return 1.0 - y * y; });
}

Tensor sigmoid_(const Tensor& x) {
  return unary(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
               [](double y) { return y * (1.0 - y); });
}

// ---------------------------------------------------------------------------

Tensor sum(const Tensor& x) {
  Tensor out = Tensor::scalar(kernels::sum(x.data().data(), x.size()));
  if (recording({&x})) {
    Tensor xc = x, oc = out;
    record(out, [xc, oc]() mutable {
      if (!oc.has_grad() || !tracked(xc)) return;
      xc.impl()->ensure_grad();
      const double g = oc.grad()[0];
      for (std::size_t i = 0; i < xc.size(); ++i) xc.grad()[i] += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  require(x.size() > 0, "mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor softmax_rows(const Tensor& x, const std::vector<std::uint8_t>* mask) {
  const bool is_vec = x.shape().size() == 1;
  const std::size_t rows = is_vec ? 1 : x.rows();
  const std::size_t cols = is_vec ? x.size() : x.cols();
  if (mask != nullptr) {
    require(mask->size() == x.size(), "softmax_rows: mask size mismatch");
  }
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = x.data().data() + r * cols;
    double* oi = out.data().data() + r * cols;
    const std::uint8_t* mi = mask ? mask->data() + r * cols : nullptr;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) {
      if (!mi || mi[j]) mx = std::max(mx, xi[j]);
    }
    require(std::isfinite(mx), "softmax_rows: row " + std::to_string(r) +
                                   " has no unmasked finite entry");
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      oi[j] = (!mi || mi[j]) ? std::exp(xi[j] - mx) : 0.0;
      z += oi[j];
    }
    const double inv = 1.0 / z;
    for (std::size_t j = 0; j < cols; ++j) oi[j] *= inv;
  }
  if (recording({&x})) {
    Tensor xc = x, oc = out;
    record(out, [xc, oc, rows, cols]() mutable {
      if (!oc.has_grad() || !tracked(xc)) return;
      xc.impl()->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* p = oc.data().data() + r * cols;
        const double* g = oc.grad().data() + r * cols;
        double* dx = xc.grad().data() + r * cols;
        const double gp = kernels::dot(g, p, cols);
        for (std::size_t j = 0; j < cols; ++j) dx[j] += p[j] * (g[j] - gp);
      }
    });
  }
  return out;
}

Tensor masked_fill(const Tensor& x, const std::vector<std::uint8_t>& mask, double value) {
  require(mask.size() == x.size(), "masked_fill: mask size " +
                                       std::to_string(mask.size()) + " vs tensor " +
                                       shape_string(x.shape()));
  Tensor out = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.data()[i] = mask[i] ? value : x.data()[i];
  }
  if (recording({&x})) {
    Tensor xc = x, oc = out;
    auto m = mask;
    record(out, [xc, oc, m]() mutable {
      if (!oc.has_grad() || !tracked(xc)) return;
      xc.impl()->ensure_grad();
      for (std::size_t i = 0; i < xc.size(); ++i) {
        if (!m[i]) xc.grad()[i] += oc.grad()[i];
      }
    });
  }
  return out;
}

Tensor dot_const(const Tensor& x, const std::vector<double>& weights) {
  require(weights.size() == x.size(), "dot_const: weight count mismatch");
  Tensor out = Tensor::scalar(kernels::dot(x.data().data(), weights.data(), x.size()));
  if (recording({&x})) {
    Tensor xc = x, oc = out;
    auto w = weights;
    record(out, [xc, oc, w]() mutable {
      if (!oc.has_grad() || !tracked(xc)) return;
      xc.impl()->ensure_grad();
      kernels::axpy(oc.grad()[0], w.data(), xc.grad().data(), xc.size());
    });
  }
  return out;
}

Tensor linear_combination(const std::vector<Tensor>& xs, const std::vector<double>& coeffs) {
  require(!xs.empty() && xs.size() == coeffs.size(),
          "linear_combination: need matching non-empty inputs");
  Tensor out = Tensor::zeros(xs[0].shape());
  bool rec = false;
  for (const Tensor& t : xs) {
    require_same_shape(xs[0], t, "linear_combination");
    if (active_tape() && tracked(t)) rec = true;
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    kernels::axpy(coeffs[i], xs[i].data().data(), out.data().data(), out.size());
  }
  if (rec) {
    auto xc = xs;
    auto c = coeffs;
    Tensor oc = out;
    record(out, [xc, c, oc]() mutable {
      if (!oc.has_grad()) return;
      for (std::size_t i = 0; i < xc.size(); ++i) {
        if (!tracked(xc[i])) continue;
        xc[i].impl()->ensure_grad();
        kernels::axpy(c[i], oc.grad().data(), xc[i].grad().data(), oc.size());
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------

Tensor rows_slice(const Tensor& x, std::size_t r0, std::size_t r1) {
  require(x.shape().size() == 2 && r0 < r1 && r1 <= x.rows(),
          "rows_slice: bad range [" + std::to_string(r0) + "," + std::to_string(r1) +
              ") for " + shape_string(x.shape()));
  const std::size_t n = x.cols();
  Tensor out = Tensor::zeros({r1 - r0, n});
  std::copy(x.data().begin() + r0 * n, x.data().begin() + r1 * n, out.data().begin());
  if (recording({&x})) {
    Tensor xc = x, oc = out;
    record(out, [xc, oc, r0, n]() mutable {
      if (!oc.has_grad() || !tracked(xc)) return;
      xc.impl()->ensure_grad();
      kernels::axpy(1.0, oc.grad().data(), xc.grad().data() + r0 * n, oc.size());
    });
  }
  return out;
}

Tensor row(const Tensor& x, std::size_t r) {
  require(x.shape().size() == 2 && r < x.rows(),
          "row: index " + std::to_string(r) + " out of " + shape_string(x.shape()));
  const std::size_t n = x.cols();
  Tensor out = Tensor::zeros({n});
  std::copy(x.data().begin() + r * n, x.data().begin() + (r + 1) * n, out.data().begin());
  if (recording({&x})) {
    Tensor xc = x, oc = out;
    record(out, [xc, oc, r, n]() mutable {
      if (!oc.has_grad() || !tracked(xc)) return;
      xc.impl()->ensure_grad();
      kernels::axpy(1.0, oc.grad().data(), xc.grad().data() + r * n, n);
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& rows) {
  require(!rows.empty(), "concat_rows: empty input");
  const std::size_t n = rows[0].size();
  bool rec = false;
  for (const Tensor& t : rows) {
    require(t.shape().size() == 1 && t.size() == n,
            "concat_rows: row shape mismatch " + shape_string(t.shape()));
    if (active_tape() && tracked(t)) rec = true;
  }
  Tensor out = Tensor::zeros({rows.size(), n});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].data().begin(), rows[i].data().end(),
              out.data().begin() + i * n);
  }
  if (rec) {
    auto rc = rows;
    Tensor oc = out;
    record(out, [rc, oc, n]() mutable {
      if (!oc.has_grad()) return;
      for (std::size_t i = 0; i < rc.size(); ++i) {
        if (!tracked(rc[i])) continue;
        rc[i].impl()->ensure_grad();
        kernels::axpy(1.0, oc.grad().data() + i * n, rc[i].grad().data(), n);
      }
    });
  }
  return out;
}

Tensor element(const Tensor& x, std::size_t i) {
  require(i < x.size(), "element: index " + std::to_string(i) + " out of " +
                            shape_string(x.shape()));
  Tensor out = Tensor::scalar(x.data()[i]);
  if (recording({&x})) {
    Tensor xc = x, oc = out;
    record(out, [xc, oc, i]() mutable {
      if (!oc.has_grad() || !tracked(xc)) return;
      xc.impl()->ensure_grad();
      xc.grad()[i] += oc.grad()[0];
    });
  }
  return out;
}

Tensor detach(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  out.data() = x.data();
  return out;
}

// ---------------------------------------------------------------------------

Tensor rms_normalize(const Tensor& x, const Tensor& gain, double eps) {
  const bool is_vec = x.shape().size() == 1;
  const std::size_t rows = is_vec ? 1 : x.rows();
  const std::size_t cols = is_vec ? x.size() : x.cols();
  require(gain.shape().size() == 1 && gain.size() == cols,
          "rms_normalize: gain shape " + shape_string(gain.shape()) + " for input " +
              shape_string(x.shape()));
  require(cols > 0, "rms_normalize: empty input");
  Tensor out = Tensor::zeros(x.shape());
  std::vector<double> inv_rms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xi = x.data().data() + r * cols;
    double ms = kernels::dot(xi, xi, cols) / static_cast<double>(cols);
    inv_rms[r] = 1.0 / std::sqrt(ms + eps);
    double* oi = out.data().data() + r * cols;
    for (std::size_t j = 0; j < cols; ++j) oi[j] = gain.data()[j] * xi[j] * inv_rms[r];
  }
  if (recording({&x, &gain})) {
    Tensor xc = x, gc = gain, oc = out;
    record(out, [xc, gc, oc, inv_rms, rows, cols]() mutable {
      if (!oc.has_grad()) return;
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xi = xc.data().data() + r * cols;
        const double* g = oc.grad().data() + r * cols;
        const double ir = inv_rms[r];
        if (tracked(gc)) {
          gc.impl()->ensure_grad();
          for (std::size_t j = 0; j < cols; ++j) gc.grad()[j] += g[j] * xi[j] * ir;
        }
        if (tracked(xc)) {
          xc.impl()->ensure_grad();
          double* dx = xc.grad().data() + r * cols;
          // d/dx of s*x*ir with ir = (mean(x^2)+eps)^{-1/2}
          double xsg = 0.0;
          for (std::size_t j = 0; j < cols; ++j) xsg += xi[j] * gc.data()[j] * g[j];
          const double coef = xsg * ir * ir * ir / static_cast<double>(cols);
          for (std::size_t j = 0; j < cols; ++j) {
            dx[j] += gc.data()[j] * g[j] * ir - xi[j] * coef;
          }
        }
      }
    });
  }
  return out;
}

Tensor embed_tokens(const std::vector<double>& values, const Tensor& w, const Tensor& b) {
  require(w.shape().size() == 1 && b.shape().size() == 1 && w.size() == b.size(),
          "embed_tokens: weight/bias shape mismatch " + shape_string(w.shape()) +
              " vs " + shape_string(b.shape()));
  for (std::size_t i = 0; i < values.size(); ++i) {
    require(std::isfinite(values[i]),
            "embed_tokens: non-finite value at index " + std::to_string(i));
  }
  const std::size_t d = w.size();
  Tensor out = Tensor::zeros({values.size(), d});
  for (std::size_t i = 0; i < values.size(); ++i) {
    double* oi = out.data().data() + i * d;
    for (std::size_t j = 0; j < d; ++j) oi[j] = values[i] * w.data()[j] + b.data()[j];
  }
  if (recording({&w, &b})) {
    Tensor wc = w, bc = b, oc = out;
    auto vals = values;
    record(out, [wc, bc, oc, vals, d]() mutable {
      if (!oc.has_grad()) return;
      for (std::size_t i = 0; i < vals.size(); ++i) {
        const double* g = oc.grad().data() + i * d;
        if (tracked(wc)) {
          wc.impl()->ensure_grad();
          kernels::axpy(vals[i], g, wc.grad().data(), d);
        }
        if (tracked(bc)) {
          bc.impl()->ensure_grad();
          kernels::axpy(1.0, g, bc.grad().data(), d);
        }
      }
    });
  }
  return out;
}

Tensor huber_mean(const Tensor& pred, const std::vector<double>& target,
                  double delta, const std::vector<std::uint8_t>& valid) {
  require(pred.size() == target.size() && pred.size() == valid.size(),
          "huber_mean: length mismatch");
  require(delta > 0.0, "huber_mean: delta must be positive");
  std::size_t count = 0;
  for (std::uint8_t v : valid) count += v != 0;
  require(count > 0, "huber_mean: no valid targets");
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!valid[i]) continue;
    const double r = pred.data()[i] - target[i];
    const double ar = std::abs(r);
    total += ar <= delta ? 0.5 * r * r : delta * (ar - 0.5 * delta);
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(count));
  if (recording({&pred})) {
    Tensor pc = pred, oc = out;
    auto t = target;
    auto v = valid;
    record(out, [pc, oc, t, v, delta, count]() mutable {
      if (!oc.has_grad() || !tracked(pc)) return;
      pc.impl()->ensure_grad();
      const double g = oc.grad()[0] / static_cast<double>(count);
      for (std::size_t i = 0; i < pc.size(); ++i) {
        if (!v[i]) continue;
        const double r = pc.data()[i] - t[i];
        pc.grad()[i] += g * (std::abs(r) <= delta ? r : (r > 0 ? delta : -delta));
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------

FdReport finite_difference_check(const std::function<Tensor()>& f,
                                 const std::vector<Tensor>& params, double step) {
  require(step >= 1e-7 && step <= 1e-4, "finite_difference_check: step out of [1e-7, 1e-4]");
  // Analytic gradients from one taped evaluation.
  for (const Tensor& p : params) const_cast<Tensor&>(p).zero_grad();
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = f();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const Tensor& p : params) {
    analytic.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.size(), 0.0));
  }
  for (const Tensor& p : params) const_cast<Tensor&>(p).zero_grad();

  FdReport report;
  NoGradScope no_grad;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p.data()[i];
      p.data()[i] = saved + step;
      const double fp = f().value();
      p.data()[i] = saved - step;
      const double fm = f().value();
      p.data()[i] = saved;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw std::runtime_error("finite_difference_check: non-finite value at param " +
                                 std::to_string(pi) + " coord " + std::to_string(i));
      }
      const double fd = (fp - fm) / (2.0 * step);
      const double an = analytic[pi][i];
      // The 1e-6 floor keeps central-difference roundoff (~1e-11 for O(1)
      // losses) from registering as a large relative error when the true
      // gradient is itself numerically zero.
      const double denom = std::max({std::abs(an), std::abs(fd), 1e-6});
      const double err = std::abs(an - fd) / denom;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = pi;
        report.worst_coord = i;
      }
    }
  }
  return report;
}

}  // namespace mira::ad
