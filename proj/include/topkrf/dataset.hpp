#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace topkrf {

/// Read-only row-major view of an m x p matrix.
struct MatrixView {
  std::span<const double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::span<const double> row(std::size_t i) const { return data.subspan(i * cols, cols); }
};

/// Dense numeric design matrix plus response. Immutable after construction.
class Dataset {
 public:
  Dataset() = default;
  /// Validates shape, finiteness and name uniqueness; throws std::invalid_argument.
  Dataset(std::vector<double> features, std::vector<double> response, std::vector<std::string> feature_names);

  std::size_t n() const { return response_.size(); }
  std::size_t p() const { return feature_names_.size(); }

  std::span<const double> row(std::size_t i) const { return {features_.data() + i * p(), p()}; }
  double feature(std::size_t i, std::size_t j) const { return features_[i * p() + j]; }
  const std::vector<double>& features() const { return features_; }
  const std::vector<double>& response() const { return response_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  MatrixView view() const { return {features_, n(), p()}; }

  /// Rows dropped for missing values while loading (0 for in-memory datasets).
  std::size_t dropped_rows() const { return dropped_rows_; }
  void set_dropped_rows(std::size_t count) { dropped_rows_ = count; }

  /// New dataset made of the given rows, in the given order.
  Dataset select(std::span<const std::size_t> rows) const;

 private:
  std::vector<double> features_;
  std::vector<double> response_;
  std::vector<std::string> feature_names_;
  std::size_t dropped_rows_ = 0;
};

enum class CategoricalPolicy { one_hot, reject };

/// Loads a CSV with a mandatory header. Columns where any non-missing cell
/// fails numeric parsing are categorical. Cells that are empty, "NA", "NaN"
/// or non-finite count as missing and drop their row.
Dataset load_csv(const std::filesystem::path& path, const std::string& target,
                 CategoricalPolicy policy = CategoricalPolicy::one_hot);

/// Same as load_csv, reading from an in-memory buffer.
Dataset parse_csv(const std::string& text, const std::string& target,
                  CategoricalPolicy policy = CategoricalPolicy::one_hot);

/// Loads a feature-only table (no response). `drop_column`, when nonempty
/// and present, is removed first. The returned response is all zeros.
Dataset load_csv_features(const std::filesystem::path& path, const std::string& drop_column = {},
                          CategoricalPolicy policy = CategoricalPolicy::one_hot);

/// Splits one CSV record (RFC-4180 quoting). Exposed for tests.
std::vector<std::vector<std::string>> parse_csv_records(const std::string& text);

struct SplitSpec {
  enum class Mode { random_shuffle, kfold, holdout_validation };

  Mode mode = Mode::random_shuffle;
  double train_fraction = 0.7;
  std::size_t folds = 5;
  double holdout_fraction = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainTest {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

/// Random-shuffle split with |train| = floor(train_fraction * n).
TrainTest train_test_split(const Dataset& d, const SplitSpec& spec);

/// Holdout validation split with |validation| = floor(holdout_fraction * n);
/// the returned `test` member is the validation part.
TrainTest holdout_split(const Dataset& d, double holdout_fraction, std::uint64_t seed);

/// K disjoint folds covering {0..n-1}; sizes differ by at most one.
std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t folds, std::uint64_t seed);

/// floor(fraction * n) rows drawn without replacement.
Dataset subsample(const Dataset& d, double fraction, std::uint64_t seed);

}  // namespace topkrf
