#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "topkrf/dataset.hpp"

namespace topkrf {

/// Features searched per split: floor(sqrt(p)), floor(f * p) or p, never below 1.
struct MaxFeatures {
  enum class Kind { sqrt, fraction, all };

  Kind kind = Kind::sqrt;
  double fraction = 1.0;

  static MaxFeatures sqrt() { return {Kind::sqrt, 1.0}; }
  static MaxFeatures all() { return {Kind::all, 1.0}; }
  static MaxFeatures of(double f) { return {Kind::fraction, f}; }

  std::size_t resolve(std::size_t p) const;
  /// "sqrt", "all" or the fraction as a shortest round-trip decimal.
  std::string to_string() const;
  static MaxFeatures parse(const std::string& text);

  friend bool operator==(const MaxFeatures&, const MaxFeatures&) = default;
};

/// Defaults are the "standard" configuration: 1000 trees, sqrt features,
/// min leaf 1, min split 5, unrestricted depth.
struct Hyperparams {
  std::size_t n_trees = 1000;
  MaxFeatures max_features = MaxFeatures::sqrt();
  std::size_t min_samples_leaf = 1;
  std::size_t min_samples_split = 5;
  std::optional<std::size_t> max_depth;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

/// Sparse nonnegative weights over training indices, sorted by index.
struct WeightVector {
  std::vector<std::uint32_t> indices;
  std::vector<double> weights;

  std::size_t size() const { return indices.size(); }
  double sum() const;
  /// Throws std::logic_error unless sorted, duplicate-free, positive, and summing to 1 within tol.
  void check(double tol = 1e-12) const;
  std::vector<double> dense(std::size_t n) const;

  friend bool operator==(const WeightVector&, const WeightVector&) = default;
};

class Tree {
 public:
  struct Node {
    std::int32_t feature = -1;  // -1 for leaves
    double threshold = 0.0;     // x[feature] <= threshold goes left
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::int32_t leaf = -1;  // leaf id for leaves

    bool is_leaf() const { return feature < 0; }
    friend bool operator==(const Node&, const Node&) = default;
  };

  Tree() = default;
  Tree(std::vector<Node> nodes, std::vector<std::uint32_t> leaf_offsets, std::vector<std::uint32_t> leaf_members);

  std::size_t leaf_of(std::span<const double> x) const;
  std::size_t num_leaves() const { return leaf_offsets_.empty() ? 0 : leaf_offsets_.size() - 1; }
  std::size_t depth() const;

  /// Original-training-set rows routed to `leaf`, ascending.
  std::span<const std::uint32_t> members(std::size_t leaf) const {
    return {leaf_members_.data() + leaf_offsets_[leaf], leaf_offsets_[leaf + 1] - leaf_offsets_[leaf]};
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<std::uint32_t>& leaf_offsets() const { return leaf_offsets_; }
  const std::vector<std::uint32_t>& leaf_members() const { return leaf_members_; }

  friend bool operator==(const Tree&, const Tree&) = default;

 private:
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> leaf_offsets_;
  std::vector<std::uint32_t> leaf_members_;
};

/// Trained ensemble. Immutable after fit; safe to share across threads.
class Forest {
 public:
  Forest() = default;
  Forest(std::vector<Tree> trees, std::vector<double> training_response, Hyperparams hp,
         std::vector<std::string> feature_names);

  const std::vector<Tree>& trees() const { return trees_; }
  const std::vector<double>& training_response() const { return *response_; }
  std::shared_ptr<const std::vector<double>> shared_response() const { return response_; }
  const Hyperparams& hyperparams() const { return hp_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  std::size_t n() const { return response_ ? response_->size() : 0; }
  std::size_t p() const { return feature_names_.size(); }

 private:
  std::vector<Tree> trees_;
  std::shared_ptr<const std::vector<double>> response_;
  Hyperparams hp_;
  std::vector<std::string> feature_names_;
};

/// Fits one tree on the bootstrap sample drawn from stream `tree_index` of hp.seed.
Tree fit_tree(const Dataset& train, const Hyperparams& hp, std::size_t tree_index);

/// Trees are fit in parallel; the result does not depend on `threads` (0 = auto).
Forest fit_forest(const Dataset& train, const Hyperparams& hp, std::size_t threads = 0);

/// 1/|leaf| on the members of the leaf x0 falls into.
WeightVector tree_weights(const Tree& tree, std::span<const double> x0);

WeightVector forest_weights(const Forest& forest, std::span<const double> x0);

double predict_mean(const Forest& forest, std::span<const double> x0);

/// Row-wise forest_weights; output order matches input rows.
std::vector<WeightVector> forest_weights_batch(const Forest& forest, const MatrixView& x0, std::size_t threads = 0);

}  // namespace topkrf
