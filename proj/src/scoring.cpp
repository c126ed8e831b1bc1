#include "topkrf/scoring.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace topkrf {

std::string to_string(ScoreRule rule) {
  switch (rule) {
    case ScoreRule::crps:
      return "crps";
    case ScoreRule::se:
      return "se";
    case ScoreRule::ae:
      return "ae";
  }
  return "crps";
}

ScoreRule parse_score_rule(const std::string& text) {
  if (text == "crps") return ScoreRule::crps;
  if (text == "se") return ScoreRule::se;
  if (text == "ae") return ScoreRule::ae;
  throw std::invalid_argument("unknown scoring rule '" + text + "' (expected crps, se or ae)");
}

double crps_wecdf(const ForecastDistribution& d, double y) {
  const std::size_t m = d.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d.value(a) < d.value(b); });

  double cumulative = 0.0;
  double sum = 0.0;
  for (std::size_t j : order) {
    const double w = d.weight(j);
    const double v = d.value(j);
    cumulative += w;
    const double above = y < v ? 1.0 : 0.0;
    sum += w * (v - y) * (above - cumulative + w / 2.0);
  }
  return std::max(0.0, 2.0 * sum);
}

double crps_numeric_oracle(const ForecastDistribution& d, double y, double grid_pad, std::size_t grid_points) {
  if (grid_points < 10000) throw std::invalid_argument("crps_numeric_oracle: grid_points must be >= 1e4");
  if (!(grid_pad >= 0.0)) throw std::invalid_argument("crps_numeric_oracle: grid_pad must be >= 0");

  std::vector<double> breaks;
  breaks.reserve(d.size() + 3);
  for (std::size_t j = 0; j < d.size(); ++j) breaks.push_back(d.value(j));
  breaks.push_back(y);
  const auto [lo, hi] = std::minmax_element(breaks.begin(), breaks.end());
  const double left = *lo - grid_pad;
  const double right = *hi + grid_pad;
  breaks.push_back(left);
  breaks.push_back(right);
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());

  double integral = 0.0;
  for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
    const double z = breaks[s];
    double cdf = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) {
      if (d.value(j) <= z) cdf += d.weight(j);
    }
    const double step = z >= y ? 1.0 : 0.0;
    const double diff = cdf - step;
    integral += diff * diff * (breaks[s + 1] - z);
  }
  return integral;
}

double crps_pairwise_oracle(const ForecastDistribution& d, double y) {
  const std::size_t m = d.size();
  double to_outcome = 0.0;
  double spread = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    to_outcome += d.weight(i) * std::fabs(d.value(i) - y);
    for (std::size_t j = 0; j < m; ++j) spread += d.weight(i) * d.weight(j) * std::fabs(d.value(i) - d.value(j));
  }
  return to_outcome - 0.5 * spread;
}

double se_score(const ForecastDistribution& d, double y) {
  const double e = y - dist_mean(d);
  return e * e;
}

double ae_score(const ForecastDistribution& d, double y) { return std::fabs(dist_quantile(d, 0.5) - y); }

double score(const ForecastDistribution& d, double y, ScoreRule rule) {
  switch (rule) {
    case ScoreRule::crps:
      return crps_wecdf(d, y);
    case ScoreRule::se:
      return se_score(d, y);
    case ScoreRule::ae:
      return ae_score(d, y);
  }
  return crps_wecdf(d, y);
}

nlohmann::json ScoreReport::to_json() const {
  return {{"rule", to_string(rule)}, {"mean", mean_score}, {"count", count}};
}

std::string ScoreReport::to_csv() const {
  std::string out = "test_index,score\n";
  for (std::size_t i = 0; i < scores.size(); ++i) out += fmt::format("{},{}\n", i, scores[i]);
  return out;
}

ScoreReport make_report(ScoreRule rule, std::vector<double> scores) {
  ScoreReport r;
  r.rule = rule;
  r.count = scores.size();
  r.mean_score = scores.empty() ? 0.0 : std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  r.scores = std::move(scores);
  return r;
}

ScoreReport evaluate(std::span<const ForecastDistribution> forecasts, std::span<const double> outcomes,
                     ScoreRule rule) {
  if (forecasts.size() != outcomes.size()) {
    throw std::invalid_argument(
        fmt::format("evaluate: {} forecasts but {} outcomes", forecasts.size(), outcomes.size()));
  }
  std::vector<double> scores(forecasts.size());
  for (std::size_t i = 0; i < forecasts.size(); ++i) scores[i] = score(forecasts[i], outcomes[i], rule);
  return make_report(rule, std::move(scores));
}

double relative_score(const ScoreReport& a, const ScoreReport& b) {
  if (b.mean_score == 0.0) throw std::domain_error("relative_score: reference mean score is zero");
  return a.mean_score / b.mean_score;
}

}  // namespace topkrf
