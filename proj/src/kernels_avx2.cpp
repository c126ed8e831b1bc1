// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "topkrf/kernels.hpp"

namespace topkrf::kernels::avx2 {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(&a[i]), _mm256_loadu_pd(&b[i]), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(&a[i + 4]), _mm256_loadu_pd(&b[i + 4]), acc1);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(&a[i]), _mm256_loadu_pd(&b[i]), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double weighted_sq_dev(std::span<const double> w, std::span<const double> u, double center) {
  const std::size_t n = w.size();
  const __m256d c = _mm256_set1_pd(center);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(&u[i]), c);
    acc = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(&w[i]), d), d, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double d = u[i] - center;
    s += w[i] * d * d;
  }
  return s;
}

double pairwise_abs(std::span<const double> a, std::span<const double> b, std::span<const double> u) {
  const std::size_t n = u.size();
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const __m256d ui = _mm256_set1_pd(u[i]);
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j + 8 <= n; j += 8) {
      const __m256d d0 = _mm256_andnot_pd(sign_mask, _mm256_sub_pd(ui, _mm256_loadu_pd(&u[j])));
      const __m256d d1 = _mm256_andnot_pd(sign_mask, _mm256_sub_pd(ui, _mm256_loadu_pd(&u[j + 4])));
      acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(&b[j]), d0, acc0);
      acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(&b[j + 4]), d1, acc1);
    }
    for (; j + 4 <= n; j += 4) {
      const __m256d d0 = _mm256_andnot_pd(sign_mask, _mm256_sub_pd(ui, _mm256_loadu_pd(&u[j])));
      acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(&b[j]), d0, acc0);
    }
    double row = hsum(_mm256_add_pd(acc0, acc1));
    for (; j < n; ++j) row += b[j] * std::fabs(u[i] - u[j]);
    total += a[i] * row;
  }
  return total;
}

}  // namespace topkrf::kernels::avx2
