#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "topkrf/forest.hpp"

namespace topkrf {

using SharedResponse = std::shared_ptr<const std::vector<double>>;

struct Provenance {
  enum class Kind { full, topk, unconditional, deterministic };

  Kind kind = Kind::full;
  std::size_t k = 0;                    // topk only
  double pre_normalization_sum = 1.0;  // topk only: sum of the kept weights before rescaling
};

/// Weighted empirical distribution over training responses. The support is
/// shared with the forest, so a distribution costs only its nonzero weights.
class ForecastDistribution {
 public:
  /// Validates the weight vector against the support (indices in range,
  /// positive, summing to one within 1e-12).
  ForecastDistribution(SharedResponse support, WeightVector weights, Provenance provenance = {});

  /// Drops zero entries of a dense weight vector of length |support|.
  static ForecastDistribution from_dense(SharedResponse support, std::span<const double> dense,
                                         Provenance provenance = {});
  static ForecastDistribution point_mass(SharedResponse support, std::uint32_t index);

  const std::vector<double>& support() const { return *support_; }
  const SharedResponse& shared_support() const { return support_; }
  const WeightVector& weights() const { return weights_; }
  const Provenance& provenance() const { return provenance_; }

  /// Number of positive weights.
  std::size_t size() const { return weights_.size(); }
  double value(std::size_t j) const { return (*support_)[weights_.indices[j]]; }
  double weight(std::size_t j) const { return weights_.weights[j]; }

 private:
  SharedResponse support_;
  WeightVector weights_;
  Provenance provenance_;
};

/// Sum of the k largest weights (ties to the lower index), added in index order.
double topk_weight_sum(const WeightVector& w, std::size_t k);

/// Keeps the min(k, m) largest of the m positive weights and rescales them to
/// sum to one. With k >= m the weights are returned unchanged.
ForecastDistribution topk_sparsify(const ForecastDistribution& d, std::size_t k);

double dist_mean(const ForecastDistribution& d);

/// Left-continuous generalized inverse: smallest support value whose
/// cumulative weight reaches tau. Tied support values are merged first.
double dist_quantile(const ForecastDistribution& d, double tau);

/// Point mass on the median; the lowest training index carrying that value wins.
ForecastDistribution deterministic_median(const ForecastDistribution& d);

/// Uniform 1/n over all training responses.
ForecastDistribution unconditional_dist(SharedResponse train_response);

/// Entry j: mean over cases of the sum of the ks[j] largest weights.
std::vector<double> weight_sum_profile(std::span<const WeightVector> ws, std::span<const std::size_t> ks);

}  // namespace topkrf
