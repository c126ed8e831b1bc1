#include "topkrf/analytical.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include "topkrf/kernels.hpp"
#include "topkrf/parallel.hpp"

namespace topkrf::analytical {
namespace {

constexpr std::size_t kChunkDraws = 512;

void warn_tiny_concentration(double concentration) {
  static std::once_flag once;
  std::call_once(once, [&] {
    std::cerr << fmt::format(
        "warning: Dirichlet concentration {} < 1e-4; draws are dominated by a single component and "
        "component weights below ~1e-300 are rounded to zero\n",
        concentration);
  });
}

void dirichlet_into(double concentration, Engine& rng, std::span<double> out) {
  if (!(concentration > 0.0)) throw std::invalid_argument("Dirichlet concentration must be positive");
  if (concentration < 1e-4) warn_tiny_concentration(concentration);
  double top = -std::numeric_limits<double>::infinity();
  for (double& v : out) {
    v = sample_log_gamma(concentration, rng);
    top = std::max(top, v);
  }
  double total = 0.0;
  for (double& v : out) {
    v = std::exp(v - top);
    total += v;
  }
  for (double& v : out) v /= total;
}

void estimated_weights_into(const Config& c, Engine& rng, std::span<double> out) {
  const auto important = out.first(c.k);
  const auto rest = out.subspan(c.k);
  dirichlet_into(c.d1, rng, important);
  dirichlet_into(c.d2, rng, rest);
  for (double& v : important) v *= c.theta;
  for (double& v : rest) v *= 1.0 - c.theta;
}

void check_lengths(std::span<const double> a, std::span<const double> b, std::span<const double> u) {
  if (a.size() != u.size() || b.size() != u.size()) {
    throw std::invalid_argument(
        fmt::format("length mismatch: omega {}, omega_star {}, u {}", a.size(), b.size(), u.size()));
  }
}

}  // namespace

void Config::validate() const {
  if (n < 4) throw std::invalid_argument(fmt::format("analytical config: n must be >= 4, got {}", n));
  if (k < 2 || k + 2 > n) throw std::invalid_argument(fmt::format("analytical config: need 2 <= k <= n-2, got k={} n={}", k, n));
  if (!(theta_star >= 0.0 && theta_star <= 1.0)) throw std::invalid_argument("analytical config: theta_star must lie in [0,1]");
  if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("analytical config: theta must lie in [0,1]");
  if (!(d1 > 0.0) || !(d2 > 0.0)) throw std::invalid_argument("analytical config: d1 and d2 must be positive");
}

std::vector<double> true_weights(const Config& c) {
  c.validate();
  std::vector<double> w(c.n, (1.0 - c.theta_star) / static_cast<double>(c.n - c.k));
  std::fill(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(c.k), c.theta_star / static_cast<double>(c.k));
  return w;
}

double sample_log_gamma(double shape, Engine& rng) {
  if (!(shape > 0.0)) throw std::invalid_argument("gamma shape must be positive");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (shape < 1.0) {
    // G(a) = G(a + 1) * U^(1/a), kept in logs.
    const double u = 1.0 - unif(rng);  // (0, 1]
    return sample_log_gamma(shape + 1.0, rng) + std::log(u) / shape;
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    const double x = normal(rng);
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = 1.0 - unif(rng);
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return std::log(d) + std::log(v);
  }
}

std::vector<double> sample_dirichlet(std::size_t dim, double concentration, Engine& rng) {
  if (dim == 0) throw std::invalid_argument("Dirichlet dimension must be positive");
  std::vector<double> out(dim);
  dirichlet_into(concentration, rng, out);
  return out;
}

std::vector<double> sample_estimated_weights(const Config& c, Engine& rng) {
  c.validate();
  std::vector<double> out(c.n);
  estimated_weights_into(c, rng, out);
  return out;
}

std::vector<double> sample_estimated_weights(const Config& c, std::uint64_t seed) {
  Engine rng = make_engine(seed, StreamPurpose::dirichlet);
  return sample_estimated_weights(c, rng);
}

double expected_se_given(std::span<const double> omega, std::span<const double> omega_star, std::span<const double> u) {
  check_lengths(omega, omega_star, u);
  const double forecast_mean = kernels::dot(omega, u);
  return kernels::weighted_sq_dev(omega_star, u, forecast_mean);
}

double expected_crps_given(std::span<const double> omega, std::span<const double> omega_star,
                           std::span<const double> u) {
  check_lengths(omega, omega_star, u);
  std::vector<double> inner(u.size());
  for (std::size_t j = 0; j < u.size(); ++j) inner[j] = omega_star[j] - omega[j] / 2.0;
  return kernels::pairwise_abs(omega, inner, u);
}

double expected_se_closed(const Config& c) {
  c.validate();
  const double n = static_cast<double>(c.n);
  const double k = static_cast<double>(c.k);
  const double ts = c.theta_star;
  const double t = c.theta;
  const double rest = n - k;
  return 1.0 - 2.0 * (ts * t / k + (1.0 - ts) * (1.0 - t) / rest) + t * t / k + (1.0 - t) * (1.0 - t) / rest +
         t * t * (k - 1.0) / (k * (c.d1 * k + 1.0)) +
         (1.0 - t) * (1.0 - t) * (rest - 1.0) / (rest * (c.d2 * rest + 1.0));
}

double expected_crps_via_se(const Config& c) { return expected_se_closed(c) / std::sqrt(std::numbers::pi); }

double expected_crps_blockwise(const Config& c) {
  c.validate();
  const double n = static_cast<double>(c.n);
  const double k = static_cast<double>(c.k);
  const double ts = c.theta_star;
  const double t = c.theta;
  const double rest = n - k;
  const double scale = 2.0 / std::sqrt(std::numbers::pi);
  const double important = t * (k - 1.0) * (ts / k - c.d1 * t / (2.0 * (k * c.d1 + 1.0)));
  const double unimportant =
      (1.0 - t) * (rest - 1.0) * ((1.0 - ts) / rest - (1.0 - t) * c.d2 / (2.0 * (rest * c.d2 + 1.0)));
  const double cross = ts + t * t - 2.0 * ts * t;
  return scale * important + scale * unimportant + scale * cross;
}

double expected_crps_closed(const Config& c) {
  const double via_se = expected_crps_via_se(c);
  const double blockwise = expected_crps_blockwise(c);
  if (std::fabs(via_se - blockwise) > 1e-12) {
    throw std::logic_error(fmt::format("closed-form E[CRPS] mismatch: {} vs {}", via_se, blockwise));
  }
  return via_se;
}

McEstimate mc_expected_scores(const Config& c, std::size_t draws, std::uint64_t seed, std::size_t threads) {
  c.validate();
  if (draws < 1000) throw std::invalid_argument("mc_expected_scores: need at least 1000 draws");

  struct Partial {
    double se = 0.0, se2 = 0.0, crps = 0.0, crps2 = 0.0;
  };
  const std::size_t chunks = (draws + kChunkDraws - 1) / kChunkDraws;
  std::vector<Partial> partial(chunks);
  const auto omega_star = true_weights(c);

  parallel_for(chunks, threads, [&](std::size_t chunk) {
    Engine rng = make_engine(seed, StreamPurpose::monte_carlo, chunk);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> omega(c.n), u(c.n), inner(c.n);
    const std::size_t count = std::min(kChunkDraws, draws - chunk * kChunkDraws);
    Partial acc;
    for (std::size_t d = 0; d < count; ++d) {
      estimated_weights_into(c, rng, omega);
      for (double& v : u) v = normal(rng);
      const double se = kernels::weighted_sq_dev(omega_star, u, kernels::dot(omega, u));
      for (std::size_t j = 0; j < c.n; ++j) inner[j] = omega_star[j] - omega[j] / 2.0;
      const double crps = kernels::pairwise_abs(omega, inner, u);
      acc.se += se;
      acc.se2 += se * se;
      acc.crps += crps;
      acc.crps2 += crps * crps;
    }
    partial[chunk] = acc;
  });

  Partial total;
  for (const auto& p : partial) {
    total.se += p.se;
    total.se2 += p.se2;
    total.crps += p.crps;
    total.crps2 += p.crps2;
  }
  const double count = static_cast<double>(draws);
  auto stderr_of = [&](double sum, double sum2) {
    const double mean = sum / count;
    const double var = std::max(0.0, (sum2 - count * mean * mean) / (count - 1.0));
    return std::sqrt(var / count);
  };
  McEstimate out;
  out.draws = draws;
  out.se_mean = total.se / count;
  out.crps_mean = total.crps / count;
  out.se_stderr = stderr_of(total.se, total.se2);
  out.crps_stderr = stderr_of(total.crps, total.crps2);
  return out;
}

std::vector<double> make_grid(double start, double stop, double step) {
  if (!(step > 0.0) || stop < start) throw std::invalid_argument("grid needs step > 0 and stop >= start");
  const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 0.5)) + 1;
  std::vector<double> grid(count);
  for (std::size_t i = 0; i < count; ++i) {
    grid[i] = std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12;
  }
  return grid;
}

Sweep theta_sweep(const Config& base, std::vector<double> theta_grid) {
  base.validate();
  if (theta_grid.empty()) throw std::invalid_argument("theta_sweep: empty grid");
  for (double t : theta_grid) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument(fmt::format("theta_sweep: grid value {} outside [0,1]", t));
  }
  std::sort(theta_grid.begin(), theta_grid.end());
  theta_grid.erase(std::unique(theta_grid.begin(), theta_grid.end()), theta_grid.end());

  Sweep out;
  Config at_one = base;
  at_one.theta = 1.0;
  out.crps_at_one = expected_crps_closed(at_one);
  double best = std::numeric_limits<double>::infinity();
  for (double t : theta_grid) {
    Config c = base;
    c.theta = t;
    const SweepRow row{t, expected_crps_closed(c), expected_se_closed(c)};
    if (row.expected_crps < best) {
      best = row.expected_crps;
      out.argmin_theta = t;
    }
    if (t < 1.0 && row.expected_crps > out.crps_at_one) out.worse_than_one_boundary = t;
    out.rows.push_back(row);
  }
  return out;
}

std::vector<WeightDrawRow> weight_draw_dump(const Config& c, std::uint64_t seed) {
  const auto truth = true_weights(c);
  const auto estimate = sample_estimated_weights(c, seed);
  std::vector<WeightDrawRow> rows(c.n);
  for (std::size_t i = 0; i < c.n; ++i) rows[i] = {i, truth[i], estimate[i]};
  return rows;
}

}  // namespace topkrf::analytical
