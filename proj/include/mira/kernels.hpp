#pragma once

#include <cstddef>
#include <string_view>

// Double-precision inner loops used by the tensor layer. Every kernel has a
// scalar reference implementation and, on x86-64 with AVX2, a vectorized
// variant. The backend is chosen once at startup; set MIRA_FORCE_SCALAR=1 to
// pin the scalar path. Both backends reduce in a fixed order, so results are
// deterministic for a given backend.

namespace mira::kernels {

enum class Backend { scalar, avx2 };

Backend active_backend();
std::string_view backend_name();

// y = sum_i a[i] * b[i]
double dot(const double* a, const double* b, std::size_t n);

// y[i] += alpha * x[i]
void axpy(double alpha, const double* x, double* y, std::size_t n);

void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);
void scale(const double* a, double alpha, double* out, std::size_t n);
double sum(const double* a, std::size_t n);

// Row-major matrix products.
// C[m,n] += A[m,k] * B[k,n]
void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);
// C[m,n] += A[m,k] * B[n,k]^T
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);
// C[m,n] += A[k,m]^T * B[k,n]
void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n);

namespace detail {
// Direct entry points for backend equivalence tests.
double dot_scalar(const double* a, const double* b, std::size_t n);
double dot_avx2(const double* a, const double* b, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
void add_scalar_k(const double* a, const double* b, double* out, std::size_t n);
void add_avx2(const double* a, const double* b, double* out, std::size_t n);
void mul_scalar_k(const double* a, const double* b, double* out, std::size_t n);
void mul_avx2(const double* a, const double* b, double* out, std::size_t n);
void scale_scalar_k(const double* a, double alpha, double* out, std::size_t n);
void scale_avx2(const double* a, double alpha, double* out, std::size_t n);
double sum_scalar_k(const double* a, std::size_t n);
double sum_avx2(const double* a, std::size_t n);
bool avx2_available();
}  // namespace detail

}  // namespace mira::kernels
