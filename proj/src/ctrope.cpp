#include "mira/ctrope.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mira::ctrope {

namespace {

// Rotates each coordinate pair of `src` (length d) by omega_i * t into `dst`.
// Accumulating into dst lets the backward pass reuse this for gradients.
void rotate_into(const std::vector<double>& omega, const double* src, double t,
                 double* dst, bool accumulate) {
  for (std::size_t i = 0; i < omega.size(); ++i) {
    const double theta = omega[i] * t;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    const double a = src[2 * i];
    const double b = src[2 * i + 1];
    const double ra = a * c - b * s;
    const double rb = a * s + b * c;
    if (accumulate) {
      dst[2 * i] += ra;
      dst[2 * i + 1] += rb;
    } else {
      dst[2 * i] = ra;
      dst[2 * i + 1] = rb;
    }
  }
}

}  // namespace

RotaryFrequencies::RotaryFrequencies(std::size_t dim) : d(dim) {
  if (dim == 0 || dim % 2 != 0) {
    throw std::invalid_argument("RotaryFrequencies: dimension must be even and positive, got " +
                                std::to_string(dim));
  }
  omega.resize(dim / 2);
  for (std::size_t i = 0; i < omega.size(); ++i) {
    omega[i] = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
  }
}

std::vector<double> rotate(const RotaryFrequencies& freq, const std::vector<double>& x,
                           double t) {
  if (x.size() != freq.d) {
    throw std::invalid_argument("ctrope::rotate: expected length " + std::to_string(freq.d) +
                                ", got " + std::to_string(x.size()));
  }
  if (!std::isfinite(t) || t < 0.0) {
    throw std::invalid_argument("ctrope::rotate: timestamp must be finite and >= 0");
  }
  std::vector<double> out(x.size());
  rotate_into(freq.omega, x.data(), t, out.data(), /*accumulate=*/false);
  return out;
}

std::vector<double> rotation_matrix(const RotaryFrequencies& freq, double t) {
  const std::size_t d = freq.d;
  std::vector<double> m(d * d, 0.0);
  for (std::size_t i = 0; i < freq.omega.size(); ++i) {
    const double theta = freq.omega[i] * t;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    m[(2 * i) * d + (2 * i)] = c;
    m[(2 * i) * d + (2 * i + 1)] = -s;
    m[(2 * i + 1) * d + (2 * i)] = s;
    m[(2 * i + 1) * d + (2 * i + 1)] = c;
  }
  return m;
}

ad::Tensor rotate_rows(const RotaryFrequencies& freq, const ad::Tensor& x,
                       const std::vector<double>& timestamps) {
  if (x.shape().size() != 2 || x.cols() != freq.d) {
    throw std::invalid_argument("ctrope::rotate_rows: expected [L, " + std::to_string(freq.d) +
                                "], got " + ad::shape_string(x.shape()));
  }
  const std::size_t rows = x.rows();
  if (timestamps.size() != rows) {
    throw std::invalid_argument("ctrope::rotate_rows: " + std::to_string(timestamps.size()) +
                                " timestamps for " + std::to_string(rows) + " rows");
  }
  for (double t : timestamps) {
    if (!std::isfinite(t)) {
      throw std::invalid_argument("ctrope::rotate_rows: non-finite timestamp");
    }
  }
  const std::size_t d = freq.d;
  ad::Tensor out = ad::Tensor::zeros({rows, d});
  for (std::size_t r = 0; r < rows; ++r) {
    rotate_into(freq.omega, x.data().data() + r * d, timestamps[r],
                out.data().data() + r * d, /*accumulate=*/false);
  }
  if (ad::active_tape() != nullptr && x.requires_grad()) {
    ad::Tensor xc = x, oc = out;
    std::vector<double> omega = freq.omega;
    std::vector<double> ts = timestamps;
    out.set_requires_grad(true);
    ad::active_tape()->record([xc, oc, omega, ts, d]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      xc.impl()->ensure_grad();
      for (std::size_t r = 0; r < ts.size(); ++r) {
        // The Jacobian of a rotation is the rotation itself, so the
        // transpose used in the pullback is the rotation by -t.
        rotate_into(omega, oc.grad().data() + r * d, -ts[r],
                    xc.grad().data() + r * d, /*accumulate=*/true);
      }
    });
  }
  return out;
}

}  // namespace mira::ctrope
