#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mira/tensor.hpp"

// Differentiable primitives. Each op evaluates eagerly and records its
// vector-Jacobian product on the active tape when some input participates
// in differentiation. Shape mismatches throw std::invalid_argument naming
// the offending shapes.

namespace mira::ad {

// -- linear algebra ---------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);     // A[m,k] * B[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // A[m,k] * B[n,k]^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // A[k,m]^T * B[k,n]
Tensor matvec(const Tensor& w, const Tensor& x);     // W[m,n] * x[n]

// -- elementwise ------------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_bias(const Tensor& x, const Tensor& bias);  // X[m,n] + b[n] per row
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor affine(const Tensor& x, double a, double b);  // a*x + b
Tensor scale_by(const Tensor& x, const Tensor& s);   // scalar tensor gate
Tensor exp_(const Tensor& x);
Tensor tanh_(const Tensor& x);
Tensor sigmoid_(const Tensor& x);

// -- reductions, softmax ----------------------------------------------------
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Row softmax with max-subtraction. Optional mask (1 = keep); masked entries
// get probability 0. A row with no kept entry is rejected.
Tensor softmax_rows(const Tensor& x, const std::vector<std::uint8_t>* mask = nullptr);
Tensor masked_fill(const Tensor& x, const std::vector<std::uint8_t>& mask, double value);
Tensor dot_const(const Tensor& x, const std::vector<double>& weights);  // scalar
Tensor linear_combination(const std::vector<Tensor>& xs, const std::vector<double>& coeffs);

// -- structure --------------------------------------------------------------
Tensor rows_slice(const Tensor& x, std::size_t r0, std::size_t r1);
Tensor row(const Tensor& x, std::size_t r);
Tensor concat_rows(const std::vector<Tensor>& rows);  // vectors -> matrix
Tensor element(const Tensor& x, std::size_t i);       // scalar
Tensor detach(const Tensor& x);

// -- model-specific fused primitives ---------------------------------------
// Root-mean-square normalization, rowwise on matrices; eps guards zeros.
Tensor rms_normalize(const Tensor& x, const Tensor& gain, double eps = 1e-8);
// X[i,:] = values[i] * w + b (point-token embedding of a scalar series)
Tensor embed_tokens(const std::vector<double>& values, const Tensor& w, const Tensor& b);
// Mean Huber loss over entries with valid[i] != 0.
Tensor huber_mean(const Tensor& pred, const std::vector<double>& target,
                  double delta, const std::vector<std::uint8_t>& valid);

// -- gradient oracle --------------------------------------------------------
struct FdReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_coord = 0;
};

// Compares analytic gradients of f (a deterministic scalar function of the
// given parameters) against central finite differences. Throws if f is
// non-finite at a perturbed point, naming the coordinate.
FdReport finite_difference_check(const std::function<Tensor()>& f,
                                 const std::vector<Tensor>& params, double step);

bool grad_will_flow(const Tensor& t);

}  // namespace mira::ad
