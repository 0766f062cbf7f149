// Compiled with -mavx2 -mfma; only reached after the dispatcher has confirmed
// CPU support.

#include "kernel_impls.hpp"

#include <immintrin.h>

#include <algorithm>

namespace peerstyle::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

// 4 rows x 8 columns of C held in registers across the whole k loop.
inline void micro_4x8(std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  __m256d c00 = _mm256_loadu_pd(c + 0 * n), c01 = _mm256_loadu_pd(c + 0 * n + 4);
  __m256d c10 = _mm256_loadu_pd(c + 1 * n), c11 = _mm256_loadu_pd(c + 1 * n + 4);
  __m256d c20 = _mm256_loadu_pd(c + 2 * n), c21 = _mm256_loadu_pd(c + 2 * n + 4);
  __m256d c30 = _mm256_loadu_pd(c + 3 * n), c31 = _mm256_loadu_pd(c + 3 * n + 4);
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d b0 = _mm256_loadu_pd(b + p * n);
    const __m256d b1 = _mm256_loadu_pd(b + p * n + 4);
    __m256d av = _mm256_broadcast_sd(a + 0 * k + p);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a + 1 * k + p);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a + 2 * k + p);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a + 3 * k + p);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  _mm256_storeu_pd(c + 0 * n, c00);
  _mm256_storeu_pd(c + 0 * n + 4, c01);
  _mm256_storeu_pd(c + 1 * n, c10);
  _mm256_storeu_pd(c + 1 * n + 4, c11);
  _mm256_storeu_pd(c + 2 * n, c20);
  _mm256_storeu_pd(c + 2 * n + 4, c21);
  _mm256_storeu_pd(c + 3 * n, c30);
  _mm256_storeu_pd(c + 3 * n + 4, c31);
}

inline void micro_4x4(std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
  __m256d c0 = _mm256_loadu_pd(c + 0 * n);
  __m256d c1 = _mm256_loadu_pd(c + 1 * n);
  __m256d c2 = _mm256_loadu_pd(c + 2 * n);
  __m256d c3 = _mm256_loadu_pd(c + 3 * n);
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d bv = _mm256_loadu_pd(b + p * n);
    c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(a + 0 * k + p), bv, c0);
    c1 = _mm256_fmadd_pd(_mm256_broadcast_sd(a + 1 * k + p), bv, c1);
    c2 = _mm256_fmadd_pd(_mm256_broadcast_sd(a + 2 * k + p), bv, c2);
    c3 = _mm256_fmadd_pd(_mm256_broadcast_sd(a + 3 * k + p), bv, c3);
  }
  _mm256_storeu_pd(c + 0 * n, c0);
  _mm256_storeu_pd(c + 1 * n, c1);
  _mm256_storeu_pd(c + 2 * n, c2);
  _mm256_storeu_pd(c + 3 * n, c3);
}

}  // namespace

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
          bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* ablk = a + i * k;
    double* cblk = c + i * n;
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) micro_4x8(n, k, ablk, b + j, cblk + j);
    for (; j + 4 <= n; j += 4) micro_4x4(n, k, ablk, b + j, cblk + j);
    for (; j < n; ++j) {
      for (std::size_t r = 0; r < 4; ++r) {
        double acc = cblk[r * n + j];
        for (std::size_t p = 0; p < k; ++p) acc += ablk[r * k + p] * b[p * n + j];
        cblk[r * n + j] = acc;
      }
    }
  }
  for (; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) axpy(a[i * k + p], b + p * n, c + i * n, n);
  }
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

double sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double total = hsum(acc);
  for (; i < n; ++i) total += x[i];
  return total;
}

double squared_distance(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double total = hsum(acc);
  for (; i < n; ++i) {
    const double d = x[i] - y[i];
    total += d * d;
  }
  return total;
}

}  // namespace peerstyle::kernels::avx2
