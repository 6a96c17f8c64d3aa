#include "mira/kernels.hpp"

#include <cstdlib>

#if defined(__x86_64__)
#include <immintrin.h>
#define MIRA_HAVE_AVX2_BUILD 1
#endif

namespace mira::kernels {

namespace detail {

bool avx2_available() {
#if defined(MIRA_HAVE_AVX2_BUILD)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add_scalar_k(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_scalar_k(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_scalar_k(const double* a, double alpha, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * a[i];
}

double sum_scalar_k(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

#if defined(MIRA_HAVE_AVX2_BUILD)

__attribute__((target("avx2,fma")))
double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  acc0 = _mm256_add_pd(acc0, acc1);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc0);
  double acc = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

__attribute__((target("avx2,fma")))
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

__attribute__((target("avx2")))
void add_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

__attribute__((target("avx2")))
void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

__attribute__((target("avx2")))
void scale_avx2(const double* a, double alpha, double* out, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(a + i)));
  }
  for (; i < n; ++i) out[i] = alpha * a[i];
}

__attribute__((target("avx2")))
double sum_avx2(const double* a, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a + i));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc0);
  double acc = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) acc += a[i];
  return acc;
}

#else

double dot_avx2(const double* a, const double* b, std::size_t n) { return dot_scalar(a, b, n); }
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) { axpy_scalar(alpha, x, y, n); }
void add_avx2(const double* a, const double* b, double* out, std::size_t n) { add_scalar_k(a, b, out, n); }
void mul_avx2(const double* a, const double* b, double* out, std::size_t n) { mul_scalar_k(a, b, out, n); }
void scale_avx2(const double* a, double alpha, double* out, std::size_t n) { scale_scalar_k(a, alpha, out, n); }
double sum_avx2(const double* a, std::size_t n) { return sum_scalar_k(a, n); }

#endif

}  // namespace detail

namespace {

Backend pick_backend() {
  if (const char* force = std::getenv("MIRA_FORCE_SCALAR");
      force != nullptr && force[0] == '1') {
    return Backend::scalar;
  }
  return detail::avx2_available() ? Backend::avx2 : Backend::scalar;
}

const Backend g_backend = pick_backend();

}  // namespace

Backend active_backend() { return g_backend; }

std::string_view backend_name() {
  return g_backend == Backend::avx2 ? "avx2" : "scalar";
}

double dot(const double* a, const double* b, std::size_t n) {
  return g_backend == Backend::avx2 ? detail::dot_avx2(a, b, n)
                                    : detail::dot_scalar(a, b, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  if (g_backend == Backend::avx2) detail::axpy_avx2(alpha, x, y, n);
  else detail::axpy_scalar(alpha, x, y, n);
}

void add(const double* a, const double* b, double* out, std::size_t n) {
  if (g_backend == Backend::avx2) detail::add_avx2(a, b, out, n);
  else detail::add_scalar_k(a, b, out, n);
}

void sub(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(const double* a, const double* b, double* out, std::size_t n) {
  if (g_backend == Backend::avx2) detail::mul_avx2(a, b, out, n);
  else detail::mul_scalar_k(a, b, out, n);
}

void scale(const double* a, double alpha, double* out, std::size_t n) {
  if (g_backend == Backend::avx2) detail::scale_avx2(a, alpha, out, n);
  else detail::scale_scalar_k(a, alpha, out, n);
}

double sum(const double* a, std::size_t n) {
  return g_backend == Backend::avx2 ? detail::sum_avx2(a, n)
                                    : detail::sum_scalar_k(a, n);
}

void matmul_nn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      axpy(arow[p], b + p * n, crow, n);
    }
  }
}

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      crow[j] += dot(arow, b + j * k, k);
    }
  }
}

void matmul_tn(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      axpy(arow[i], brow, c + i * n, n);
    }
  }
}

}  // namespace mira::kernels
