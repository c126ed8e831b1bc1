#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "topkrf/forecast.hpp"

namespace topkrf {

enum class ScoreRule { crps, se, ae };

std::string to_string(ScoreRule rule);
ScoreRule parse_score_rule(const std::string& text);

/// CRPS of a weighted ECDF via the sorted closed form, O(m log m) in the
/// number of positive weights. Never negative.
double crps_wecdf(const ForecastDistribution& d, double y);

/// CRPS by exact integration of the squared CDF difference. The integrand is
/// piecewise constant between the breakpoints (support values and y), and
/// each segment height is recomputed from scratch, so this shares no code
/// path with crps_wecdf. grid_pad widens the integration window on both
/// sides; grid_points must be >= 1e4 and only bounds that outer window.
double crps_numeric_oracle(const ForecastDistribution& d, double y, double grid_pad = 1.0,
                           std::size_t grid_points = 10000);

/// E|X - y| - E|X - X'| / 2 by a direct O(m^2) double sum.
double crps_pairwise_oracle(const ForecastDistribution& d, double y);

/// (y - mean)^2
double se_score(const ForecastDistribution& d, double y);

/// |median - y|
double ae_score(const ForecastDistribution& d, double y);

double score(const ForecastDistribution& d, double y, ScoreRule rule);

struct ScoreReport {
  ScoreRule rule = ScoreRule::crps;
  std::vector<double> scores;
  double mean_score = 0.0;
  std::size_t count = 0;

  nlohmann::json to_json() const;
  /// Header "test_index,score", one line per case, shortest round-trip decimals.
  std::string to_csv() const;
};

ScoreReport make_report(ScoreRule rule, std::vector<double> scores);

ScoreReport evaluate(std::span<const ForecastDistribution> forecasts, std::span<const double> outcomes,
                     ScoreRule rule);

/// a.mean_score / b.mean_score; throws std::domain_error when b's mean is zero.
double relative_score(const ScoreReport& a, const ScoreReport& b);

}  // namespace topkrf
