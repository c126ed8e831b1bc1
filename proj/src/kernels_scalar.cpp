#include <cmath>
#include <cstddef>

#include "topkrf/kernels.hpp"

namespace topkrf::kernels::scalar {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double weighted_sq_dev(std::span<const double> w, std::span<const double> u, double center) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double d = u[i] - center;
    s += w[i] * d * d;
  }
  return s;
}

double pairwise_abs(std::span<const double> a, std::span<const double> b, std::span<const double> u) {
  const std::size_t n = u.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += b[j] * std::fabs(u[i] - u[j]);
    total += a[i] * row;
  }
  return total;
}

}  // namespace topkrf::kernels::scalar
