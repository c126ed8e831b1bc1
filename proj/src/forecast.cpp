#include "topkrf/forecast.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace topkrf {
namespace {

// Positions into w ordered by weight descending, index ascending.
std::vector<std::size_t> largest_first(const WeightVector& w, std::size_t keep) {
  std::vector<std::size_t> order(w.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto by_weight = [&](std::size_t a, std::size_t b) {
    if (w.weights[a] != w.weights[b]) return w.weights[a] > w.weights[b];
    return w.indices[a] < w.indices[b];
  };
  keep = std::min(keep, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), by_weight);
  order.resize(keep);
  std::sort(order.begin(), order.end());  // positions ascend with training index
  return order;
}

}  // namespace

ForecastDistribution::ForecastDistribution(SharedResponse support, WeightVector weights, Provenance provenance)
    : support_(std::move(support)), weights_(std::move(weights)), provenance_(provenance) {
  if (!support_ || support_->empty()) throw std::invalid_argument("forecast distribution needs a support");
  weights_.check(1e-12);
  if (weights_.indices.back() >= support_->size()) throw std::invalid_argument("weight index beyond support");
  if (provenance_.kind == Provenance::Kind::deterministic && weights_.size() != 1) {
    throw std::invalid_argument("deterministic distribution must have exactly one support point");
  }
}

ForecastDistribution ForecastDistribution::from_dense(SharedResponse support, std::span<const double> dense,
                                                      Provenance provenance) {
  if (!support || dense.size() != support->size()) throw std::invalid_argument("dense weights must match support size");
  WeightVector w;
  for (std::size_t i = 0; i < dense.size(); ++i) {
    if (dense[i] < 0.0) throw std::invalid_argument("negative weight");
    if (dense[i] > 0.0) {
      w.indices.push_back(static_cast<std::uint32_t>(i));
      w.weights.push_back(dense[i]);
    }
  }
  return ForecastDistribution(std::move(support), std::move(w), provenance);
}

ForecastDistribution ForecastDistribution::point_mass(SharedResponse support, std::uint32_t index) {
  WeightVector w;
  w.indices = {index};
  w.weights = {1.0};
  return ForecastDistribution(std::move(support), std::move(w), {Provenance::Kind::deterministic, 0, 1.0});
}

double topk_weight_sum(const WeightVector& w, std::size_t k) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  double s = 0.0;
  for (std::size_t pos : largest_first(w, k)) s += w.weights[pos];
  return s;
}

ForecastDistribution topk_sparsify(const ForecastDistribution& d, std::size_t k) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  const WeightVector& w = d.weights();
  if (k >= w.size()) {
    return ForecastDistribution(d.shared_support(), w, {Provenance::Kind::topk, k, w.sum()});
  }
  const auto kept = largest_first(w, k);
  WeightVector out;
  out.indices.reserve(kept.size());
  out.weights.reserve(kept.size());
  double total = 0.0;
  for (std::size_t pos : kept) total += w.weights[pos];
  for (std::size_t pos : kept) {
    out.indices.push_back(w.indices[pos]);
    out.weights.push_back(w.weights[pos] / total);
  }
  return ForecastDistribution(d.shared_support(), std::move(out), {Provenance::Kind::topk, k, total});
}

double dist_mean(const ForecastDistribution& d) {
  double mean = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j) mean += d.weight(j) * d.value(j);
  return mean;
}

double dist_quantile(const ForecastDistribution& d, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("quantile level must lie in (0,1)");
  std::vector<std::pair<double, double>> atoms;
  atoms.reserve(d.size());
  for (std::size_t j = 0; j < d.size(); ++j) atoms.emplace_back(d.value(j), d.weight(j));
  std::sort(atoms.begin(), atoms.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

  double cumulative = 0.0;
  for (std::size_t j = 0; j < atoms.size();) {
    const double v = atoms[j].first;
    for (; j < atoms.size() && atoms[j].first == v; ++j) cumulative += atoms[j].second;
    if (cumulative >= tau) return v;
  }
  return atoms.back().first;
}

ForecastDistribution deterministic_median(const ForecastDistribution& d) {
  const double median = dist_quantile(d, 0.5);
  for (std::size_t j = 0; j < d.size(); ++j) {
    if (d.value(j) == median) return ForecastDistribution::point_mass(d.shared_support(), d.weights().indices[j]);
  }
  throw std::logic_error("median not found in support");
}

ForecastDistribution unconditional_dist(SharedResponse train_response) {
  if (!train_response || train_response->empty()) throw std::invalid_argument("unconditional distribution needs n >= 1");
  const std::size_t n = train_response->size();
  WeightVector w;
  w.indices.resize(n);
  std::iota(w.indices.begin(), w.indices.end(), std::uint32_t{0});
  w.weights.assign(n, 1.0 / static_cast<double>(n));
  return ForecastDistribution(std::move(train_response), std::move(w), {Provenance::Kind::unconditional, 0, 1.0});
}

std::vector<double> weight_sum_profile(std::span<const WeightVector> ws, std::span<const std::size_t> ks) {
  if (ws.empty()) throw std::invalid_argument("weight_sum_profile: empty weight list");
  for (std::size_t k : ks) {
    if (k == 0) throw std::invalid_argument("weight_sum_profile: k must be >= 1");
  }
  std::vector<double> out(ks.size(), 0.0);
  for (const auto& w : ws) {
    for (std::size_t j = 0; j < ks.size(); ++j) out[j] += topk_weight_sum(w, ks[j]);
  }
  for (double& v : out) v /= static_cast<double>(ws.size());
  return out;
}

}  // namespace topkrf
