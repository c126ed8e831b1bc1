#include "topkrf/forest.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "topkrf/parallel.hpp"
#include "topkrf/random.hpp"

namespace topkrf {

std::size_t MaxFeatures::resolve(std::size_t p) const {
  if (p == 0) throw std::invalid_argument("max_features: p must be positive");
  std::size_t k = p;
  switch (kind) {
    case Kind::sqrt:
      k = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(p))));
      break;
    case Kind::fraction:
      k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(p) + 1e-9));
      break;
    case Kind::all:
      break;
  }
  return std::clamp<std::size_t>(k, 1, p);
}

std::string MaxFeatures::to_string() const {
  switch (kind) {
    case Kind::sqrt:
      return "sqrt";
    case Kind::all:
      return "all";
    case Kind::fraction:
      return fmt::format("{}", fraction);
  }
  return "sqrt";
}

MaxFeatures MaxFeatures::parse(const std::string& text) {
  if (text == "sqrt") return sqrt();
  if (text == "all") return all();
  std::size_t used = 0;
  double f = 0.0;
  try {
    f = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || !(f > 0.0 && f <= 1.0)) {
    throw std::invalid_argument("max_features must be 'sqrt', 'all' or a fraction in (0,1], got '" + text + "'");
  }
  return of(f);
}

void Hyperparams::validate() const {
  if (n_trees < 1) throw std::invalid_argument("n_trees must be >= 1");
  if (min_samples_leaf < 1) throw std::invalid_argument("min_samples_leaf must be >= 1");
  if (min_samples_split < 2) throw std::invalid_argument("min_samples_split must be >= 2");
  if (max_depth && *max_depth < 1) throw std::invalid_argument("max_depth must be >= 1");
  if (max_features.kind == MaxFeatures::Kind::fraction && !(max_features.fraction > 0.0 && max_features.fraction <= 1.0)) {
    throw std::invalid_argument("max_features fraction must lie in (0,1]");
  }
}

double WeightVector::sum() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }

void WeightVector::check(double tol) const {
  if (indices.size() != weights.size()) throw std::logic_error("weight vector: index/weight length mismatch");
  if (indices.empty()) throw std::logic_error("weight vector is empty");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (i > 0 && indices[i] <= indices[i - 1]) throw std::logic_error("weight vector indices not strictly ascending");
    if (!(weights[i] > 0.0)) throw std::logic_error("weight vector holds a nonpositive weight");
  }
  if (std::fabs(sum() - 1.0) > tol) throw std::logic_error("weight vector does not sum to one");
}

std::vector<double> WeightVector::dense(std::size_t n) const {
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < indices.size(); ++i) out.at(indices[i]) = weights[i];
  return out;
}

Tree::Tree(std::vector<Node> nodes, std::vector<std::uint32_t> leaf_offsets, std::vector<std::uint32_t> leaf_members)
    : nodes_(std::move(nodes)), leaf_offsets_(std::move(leaf_offsets)), leaf_members_(std::move(leaf_members)) {
  if (nodes_.empty() || leaf_offsets_.size() < 2) throw std::invalid_argument("tree needs at least one leaf");
  if (leaf_offsets_.front() != 0 || leaf_offsets_.back() != leaf_members_.size()) {
    throw std::invalid_argument("tree leaf offsets inconsistent with member table");
  }
  const auto leaves = static_cast<std::int32_t>(leaf_offsets_.size() - 1);
  const auto count = static_cast<std::int32_t>(nodes_.size());
  for (const auto& node : nodes_) {
    if (node.is_leaf()) {
      if (node.leaf < 0 || node.leaf >= leaves) throw std::invalid_argument("tree leaf id out of range");
    } else if (node.left <= 0 || node.left >= count || node.right <= 0 || node.right >= count) {
      throw std::invalid_argument("tree child index out of range");
    }
  }
}

std::size_t Tree::leaf_of(std::span<const double> x) const {
  std::size_t at = 0;
  while (!nodes_[at].is_leaf()) {
    const Node& node = nodes_[at];
    at = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right);
  }
  return static_cast<std::size_t>(nodes_[at].leaf);
}

std::size_t Tree::depth() const {
  std::vector<std::size_t> level(nodes_.size(), 0);
  std::size_t deepest = 0;
  // Children always come after their parent in preorder.
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (!nodes_[i].is_leaf()) {
      level[static_cast<std::size_t>(nodes_[i].left)] = level[i] + 1;
      level[static_cast<std::size_t>(nodes_[i].right)] = level[i] + 1;
    }
  }
  return deepest;
}

Forest::Forest(std::vector<Tree> trees, std::vector<double> training_response, Hyperparams hp,
               std::vector<std::string> feature_names)
    : trees_(std::move(trees)),
      response_(std::make_shared<const std::vector<double>>(std::move(training_response))),
      hp_(hp),
      feature_names_(std::move(feature_names)) {
  if (trees_.size() != hp_.n_trees) throw std::invalid_argument("forest: tree count does not match n_trees");
  for (const auto& tree : trees_) {
    if (tree.leaf_members().size() != response_->size()) {
      throw std::invalid_argument("forest: tree membership does not cover the training set");
    }
  }
}

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const Dataset& data, const Hyperparams& hp, std::size_t tree_index)
      : data_(data), hp_(hp), rng_(make_engine(hp.seed, StreamPurpose::tree, tree_index)) {
    mtry_ = hp.max_features.resolve(data.p());
    feature_pool_.resize(data.p());
    std::iota(feature_pool_.begin(), feature_pool_.end(), std::size_t{0});
  }

  Tree build() {
    const std::size_t n = data_.n();
    sample_.resize(n);
    std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(n - 1));
    for (auto& s : sample_) s = pick(rng_);

    grow(0, n, 0);

    // Leaf membership over the original training rows, not the bootstrap sample.
    std::vector<std::uint32_t> leaf_of_row(n);
    std::vector<std::uint32_t> offsets(static_cast<std::size_t>(leaves_) + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
      leaf_of_row[i] = static_cast<std::uint32_t>(route(data_.row(i)));
      ++offsets[leaf_of_row[i] + 1];
    }
    std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
    std::vector<std::uint32_t> members(n);
    std::vector<std::uint32_t> fill(offsets.begin(), offsets.end() - 1);
    for (std::size_t i = 0; i < n; ++i) members[fill[leaf_of_row[i]]++] = static_cast<std::uint32_t>(i);
    for (std::size_t leaf = 0; leaf + 1 < offsets.size(); ++leaf) {
      // Every leaf holds at least one bootstrap row, and bootstrap rows are training rows.
      if (offsets[leaf] == offsets[leaf + 1]) throw std::logic_error("tree leaf without training members");
    }
    return Tree(std::move(nodes_), std::move(offsets), std::move(members));
  }

 private:
  struct Split {
    std::int32_t feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
  };

  std::size_t route(std::span<const double> x) const {
    std::size_t at = 0;
    while (!nodes_[at].is_leaf()) {
      const auto& node = nodes_[at];
      at = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                                                  : node.right);
    }
    return static_cast<std::size_t>(nodes_[at].leaf);
  }

  std::int32_t make_leaf(std::size_t at) {
    nodes_[at].leaf = leaves_++;
    return static_cast<std::int32_t>(at);
  }

  std::int32_t grow(std::size_t begin, std::size_t end, std::size_t depth) {
    const std::size_t at = nodes_.size();
    nodes_.emplace_back();
    const std::size_t m = end - begin;

    if (m < hp_.min_samples_split || m < 2 * hp_.min_samples_leaf) return make_leaf(at);
    if (hp_.max_depth && depth >= *hp_.max_depth) return make_leaf(at);
    const double first = data_.response()[sample_[begin]];
    const bool constant = std::all_of(sample_.begin() + static_cast<std::ptrdiff_t>(begin),
                                      sample_.begin() + static_cast<std::ptrdiff_t>(end),
                                      [&](std::uint32_t r) { return data_.response()[r] == first; });
    if (constant) return make_leaf(at);

    const Split split = best_split(begin, end);
    if (split.feature < 0) return make_leaf(at);

    const auto f = static_cast<std::size_t>(split.feature);
    const auto mid_it = std::stable_partition(
        sample_.begin() + static_cast<std::ptrdiff_t>(begin), sample_.begin() + static_cast<std::ptrdiff_t>(end),
        [&](std::uint32_t r) { return data_.feature(r, f) <= split.threshold; });
    const auto mid = static_cast<std::size_t>(mid_it - sample_.begin());

    const std::int32_t left = grow(begin, mid, depth + 1);
    const std::int32_t right = grow(mid, end, depth + 1);
    Tree::Node& node = nodes_[at];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = left;
    node.right = right;
    return static_cast<std::int32_t>(at);
  }

  Split best_split(std::size_t begin, std::size_t end) {
    const std::size_t m = end - begin;
    const std::size_t min_leaf = hp_.min_samples_leaf;

    // Fresh feature subset per node: partial Fisher-Yates over the pool.
    for (std::size_t i = 0; i < mtry_; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, feature_pool_.size() - 1);
      std::swap(feature_pool_[i], feature_pool_[pick(rng_)]);
    }
    candidates_.assign(feature_pool_.begin(), feature_pool_.begin() + static_cast<std::ptrdiff_t>(mtry_));
    std::sort(candidates_.begin(), candidates_.end());

    double mean = 0.0;
    for (std::size_t i = begin; i < end; ++i) mean += data_.response()[sample_[i]];
    mean /= static_cast<double>(m);

    Split best;
    scratch_.resize(m);
    for (std::size_t f : candidates_) {
      for (std::size_t i = 0; i < m; ++i) {
        const std::uint32_t r = sample_[begin + i];
        scratch_[i] = {data_.feature(r, f), data_.response()[r] - mean};
      }
      std::sort(scratch_.begin(), scratch_.end());
      if (scratch_.front().first == scratch_.back().first) continue;

      double total = 0.0;
      for (const auto& [x, c] : scratch_) total += c;
      const double parent = total * total / static_cast<double>(m);

      double left_sum = 0.0;
      for (std::size_t i = 1; i < m; ++i) {
        left_sum += scratch_[i - 1].second;
        if (i < min_leaf) continue;
        if (m - i < min_leaf) break;
        if (!(scratch_[i - 1].first < scratch_[i].first)) continue;
        const double right_sum = total - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(i) +
                            right_sum * right_sum / static_cast<double>(m - i) - parent;
        if (gain > best.gain) {
          const double lo = scratch_[i - 1].first;
          const double hi = scratch_[i].first;
          double threshold = lo + (hi - lo) / 2.0;
          if (!(threshold < hi)) threshold = lo;
          best = {static_cast<std::int32_t>(f), threshold, gain};
        }
      }
    }
    return best;
  }

  const Dataset& data_;
  const Hyperparams& hp_;
  Engine rng_;
  std::size_t mtry_ = 1;
  std::vector<std::size_t> feature_pool_;
  std::vector<std::size_t> candidates_;
  std::vector<std::uint32_t> sample_;
  std::vector<std::pair<double, double>> scratch_;
  std::vector<Tree::Node> nodes_;
  std::int32_t leaves_ = 0;
};

class WeightAccumulator {
 public:
  explicit WeightAccumulator(std::size_t n) : acc_(n, 0.0) {}

  void add(const Tree& tree, std::span<const double> x0) {
    const auto members = tree.members(tree.leaf_of(x0));
    const double share = 1.0 / static_cast<double>(members.size());
    for (std::uint32_t i : members) {
      if (acc_[i] == 0.0) touched_.push_back(i);
      acc_[i] += share;
    }
  }

  WeightVector finish(std::size_t trees) {
    std::sort(touched_.begin(), touched_.end());
    WeightVector out;
    out.indices = touched_;
    out.weights.reserve(touched_.size());
    const auto b = static_cast<double>(trees);
    for (std::uint32_t i : touched_) {
      out.weights.push_back(acc_[i] / b);
      acc_[i] = 0.0;
    }
    touched_.clear();
    return out;
  }

 private:
  std::vector<double> acc_;
  std::vector<std::uint32_t> touched_;
};

void check_width(const Forest& forest, std::size_t cols) {
  if (cols != forest.p()) {
    throw std::invalid_argument(fmt::format("feature vector has {} entries, forest expects {}", cols, forest.p()));
  }
}

}  // namespace

Tree fit_tree(const Dataset& train, const Hyperparams& hp, std::size_t tree_index) {
  hp.validate();
  if (train.n() < 2) throw std::invalid_argument("fit needs at least 2 training rows");
  if (hp.max_features.resolve(train.p()) == 0) throw std::invalid_argument("max_features resolved to 0");
  return TreeBuilder(train, hp, tree_index).build();
}

Forest fit_forest(const Dataset& train, const Hyperparams& hp, std::size_t threads) {
  hp.validate();
  if (train.n() < 2) throw std::invalid_argument("fit needs at least 2 training rows");
  std::vector<Tree> trees(hp.n_trees);
  parallel_for(hp.n_trees, threads, [&](std::size_t b) { trees[b] = TreeBuilder(train, hp, b).build(); });
  return Forest(std::move(trees), train.response(), hp, train.feature_names());
}

WeightVector tree_weights(const Tree& tree, std::span<const double> x0) {
  const auto members = tree.members(tree.leaf_of(x0));
  if (members.empty()) throw std::logic_error("tree leaf without training members");
  WeightVector out;
  out.indices.assign(members.begin(), members.end());
  out.weights.assign(members.size(), 1.0 / static_cast<double>(members.size()));
  return out;
}

WeightVector forest_weights(const Forest& forest, std::span<const double> x0) {
  check_width(forest, x0.size());
  WeightAccumulator acc(forest.n());
  for (const auto& tree : forest.trees()) acc.add(tree, x0);
  return acc.finish(forest.trees().size());
}

double predict_mean(const Forest& forest, std::span<const double> x0) {
  const WeightVector w = forest_weights(forest, x0);
  const auto& y = forest.training_response();
  double mean = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) mean += w.weights[i] * y[w.indices[i]];
  return mean;
}

std::vector<WeightVector> forest_weights_batch(const Forest& forest, const MatrixView& x0, std::size_t threads) {
  check_width(forest, x0.cols);
  const std::size_t workers = std::min(resolve_threads(threads), std::max<std::size_t>(x0.rows, 1));
  std::vector<WeightAccumulator> scratch(workers, WeightAccumulator(forest.n()));
  std::vector<WeightVector> out(x0.rows);
  parallel_for_worker(x0.rows, workers, [&](std::size_t worker, std::size_t i) {
    for (const auto& tree : forest.trees()) scratch[worker].add(tree, x0.row(i));
    out[i] = scratch[worker].finish(forest.trees().size());
  });
  return out;
}

}  // namespace topkrf
