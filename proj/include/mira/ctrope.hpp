#pragma once

#include <cstddef>
#include <vector>

#include "mira/tensor.hpp"

// Continuous-time rotary positional encoding. Each pair of embedding
// coordinates (x_{2i}, x_{2i+1}) is rotated by the angle omega_i * t, with
// omega_i = 10000^(-2i/d). Rotations by real-valued timestamps make the
// attention score depend only on timestamp differences.

namespace mira::ctrope {

struct RotaryFrequencies {
  std::size_t d = 0;             // even per-head dimension
  std::vector<double> omega;     // d/2 angular frequencies, decreasing from 1

  explicit RotaryFrequencies(std::size_t dim);
};

// Plain rotation of one vector (no tape involvement).
std::vector<double> rotate(const RotaryFrequencies& freq, const std::vector<double>& x,
                           double t);

// Explicit d x d block-diagonal rotation matrix, for property testing.
std::vector<double> rotation_matrix(const RotaryFrequencies& freq, double t);

// Differentiable rowwise rotation: row i of x (shape [L, d]) is rotated by
// its own timestamp. The backward pass rotates gradients by -t.
ad::Tensor rotate_rows(const RotaryFrequencies& freq, const ad::Tensor& x,
                       const std::vector<double>& timestamps);

}  // namespace mira::ctrope
