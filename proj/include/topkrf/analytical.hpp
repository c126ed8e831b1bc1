#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "topkrf/random.hpp"

namespace topkrf::analytical {

/// Stylized forecast model: n support points, of which the first k are
/// "important" and carry true mass theta_star. Estimated weights put mass
/// theta on the important block, spread by Dirichlet(d1) and Dirichlet(d2)
/// draws within the two blocks.
struct Config {
  std::size_t n = 20;
  std::size_t k = 5;
  double theta_star = 0.8;
  double theta = 0.8;
  double d1 = 1.0;
  double d2 = 1.0;

  /// Requires n >= 4, 2 <= k <= n-2, theta and theta_star in [0,1], d1, d2 > 0.
  void validate() const;
};

/// theta*/k on the first k indices, (1 - theta*)/(n - k) elsewhere.
std::vector<double> true_weights(const Config& c);

/// Gamma(shape, 1) draw returned as its logarithm, so that tiny shapes do
/// not underflow. Marsaglia-Tsang, with the U^(1/shape) boost for shape < 1.
double sample_log_gamma(double shape, Engine& rng);

/// Symmetric Dirichlet(concentration * 1_dim) draw. Shapes below 1 go
/// through log-space normalization; shapes below 1e-4 print a one-time
/// precision warning to stderr.
std::vector<double> sample_dirichlet(std::size_t dim, double concentration, Engine& rng);

std::vector<double> sample_estimated_weights(const Config& c, Engine& rng);
std::vector<double> sample_estimated_weights(const Config& c, std::uint64_t seed);

/// sum_i w*_i (u_i - sum_j w_j u_j)^2
double expected_se_given(std::span<const double> omega, std::span<const double> omega_star, std::span<const double> u);

/// sum_i sum_j w_i (w*_j - w_j / 2) |u_i - u_j|
double expected_crps_given(std::span<const double> omega, std::span<const double> omega_star,
                           std::span<const double> u);

/// Closed-form expectation of expected_se_given over omega and standard normal u.
double expected_se_closed(const Config& c);

/// The CRPS closed form as E[SE] / sqrt(pi).
double expected_crps_via_se(const Config& c);
/// The CRPS closed form summed block by block (important/important,
/// unimportant/unimportant, cross terms).
double expected_crps_blockwise(const Config& c);
/// Evaluates both forms and throws std::logic_error if they differ by more than 1e-12.
double expected_crps_closed(const Config& c);

struct McEstimate {
  double se_mean = 0.0;
  double crps_mean = 0.0;
  double se_stderr = 0.0;
  double crps_stderr = 0.0;
  std::size_t draws = 0;
};

/// Averages expected_se_given / expected_crps_given over independent
/// (omega, u) draws. Draws are grouped into fixed chunks with their own RNG
/// streams, so results do not depend on `threads`.
McEstimate mc_expected_scores(const Config& c, std::size_t draws, std::uint64_t seed, std::size_t threads = 0);

struct SweepRow {
  double theta = 0.0;
  double expected_crps = 0.0;
  double expected_se = 0.0;
};

struct Sweep {
  std::vector<SweepRow> rows;
  double argmin_theta = 0.0;
  /// Largest grid theta < 1 whose E[CRPS] exceeds E[CRPS] at theta = 1, if any.
  std::optional<double> worse_than_one_boundary;
  double crps_at_one = 0.0;
};

/// Closed-form E[CRPS] per grid point; grid is sorted ascending first.
Sweep theta_sweep(const Config& base, std::vector<double> theta_grid);

/// start, start + step, ..., stop (inclusive within step/2), rounded to 12 decimals.
std::vector<double> make_grid(double start, double stop, double step);

struct WeightDrawRow {
  std::size_t index = 0;
  double true_weight = 0.0;
  double estimated_weight = 0.0;
};

std::vector<WeightDrawRow> weight_draw_dump(const Config& c, std::uint64_t seed);

}  // namespace topkrf::analytical
