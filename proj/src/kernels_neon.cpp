#include <arm_neon.h>

#include <cmath>
#include <cstddef>

#include "topkrf/kernels.hpp"

namespace topkrf::kernels::neon {

double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vfmaq_f64(acc, vld1q_f64(&a[i]), vld1q_f64(&b[i]));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double weighted_sq_dev(std::span<const double> w, std::span<const double> u, double center) {
  const std::size_t n = w.size();
  const float64x2_t c = vdupq_n_f64(center);
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t d = vsubq_f64(vld1q_f64(&u[i]), c);
    acc = vfmaq_f64(acc, vmulq_f64(vld1q_f64(&w[i]), d), d);
  }
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) {
    const double d = u[i] - center;
    s += w[i] * d * d;
  }
  return s;
}

double pairwise_abs(std::span<const double> a, std::span<const double> b, std::span<const double> u) {
  const std::size_t n = u.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const float64x2_t ui = vdupq_n_f64(u[i]);
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t j = 0;
    for (; j + 2 <= n; j += 2) acc = vfmaq_f64(acc, vld1q_f64(&b[j]), vabdq_f64(ui, vld1q_f64(&u[j])));
    double row = vaddvq_f64(acc);
    for (; j < n; ++j) row += b[j] * std::fabs(u[i] - u[j]);
    total += a[i] * row;
  }
  return total;
}

}  // namespace topkrf::kernels::neon
