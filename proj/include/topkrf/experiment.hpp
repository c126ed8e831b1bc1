#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "topkrf/analytical.hpp"
#include "topkrf/dataset.hpp"
#include "topkrf/forest.hpp"
#include "topkrf/scoring.hpp"
#include "topkrf/synthetic.hpp"

namespace topkrf {

/// One manifest entry: either a CSV file (path + target) or a synthetic generator.
struct DatasetEntry {
  std::string name;
  std::filesystem::path path;
  std::string target;
  CategoricalPolicy categorical = CategoricalPolicy::one_hot;
  double subsample = 1.0;
  std::optional<synthetic::Spec> synthetic;
};

/// Relative paths resolve against `base_dir`. Errors name the offending entry and key.
std::vector<DatasetEntry> parse_manifest(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
std::vector<DatasetEntry> load_manifest(const std::filesystem::path& path);
Dataset load_entry(const DatasetEntry& entry, std::uint64_t seed);

struct GridSpec {
  enum class Cv { kfold, holdout };
  enum class Target { full, topk };

  std::vector<std::size_t> min_samples_leaf = {1, 2, 4, 6, 8, 10, 15, 20, 30, 40, 50};
  std::vector<MaxFeatures> max_features = {MaxFeatures::of(0.333), MaxFeatures::sqrt(), MaxFeatures::of(0.5),
                                           MaxFeatures::of(1.0)};
  Cv cv = Cv::kfold;
  std::size_t folds = 5;
  double holdout_fraction = 0.25;
  Target tune_target = Target::full;
  std::size_t tune_k = 3;
  ScoreRule tune_rule = ScoreRule::crps;
  /// Fraction of the training set kept before tuning (large-data accommodation).
  double train_subsample = 1.0;

  void validate() const;
  std::size_t size() const { return min_samples_leaf.size() * max_features.size(); }
};

GridSpec grid_spec_from_json(const nlohmann::json& j);

struct ExperimentConfig {
  std::vector<DatasetEntry> datasets;
  std::vector<std::size_t> k_list = {3, 5, 10, 20, 50};
  Hyperparams hyperparams;
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
  std::size_t threads = 0;
  std::filesystem::path out = "results";
  GridSpec grid;

  /// k_list nonempty, ascending, deduplicated; hyperparams valid.
  void validate() const;
};

/// Keys: manifest | datasets, k_list, hyperparams, train_fraction, seed,
/// threads, out, grid. Unknown keys are errors. `base_dir` anchors relative paths.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

/// Scores of one train/test evaluation.
struct SplitEvaluation {
  std::vector<std::size_t> k_list;
  std::vector<double> outcomes;
  std::vector<double> crps_full, se_full;
  std::vector<std::vector<double>> crps_topk, se_topk;  // [k][case]
  std::vector<double> crps_median, crps_unconditional;
  std::vector<double> weight_sums;  // averaged pre-normalization sums per k

  double mean_crps_full() const;
  double mean_se_full() const;
  double rel_crps(std::size_t j) const;
  double rel_se(std::size_t j) const;
  double rel_crps_median() const;
  double rel_crps_unconditional() const;
};

/// Fits a forest on `train` and scores full, Top-k and benchmark forecasts on `test`.
SplitEvaluation evaluate_split(const Dataset& train, const Dataset& test, const Hyperparams& hp,
                               const std::vector<std::size_t>& k_list, std::size_t threads);

struct DatasetResult {
  std::string name;
  std::optional<std::string> error;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t dropped_rows = 0;
  double seconds = 0.0;
  SplitEvaluation eval;
};

/// Lower median for even counts.
double lower_median(std::vector<double> values);

std::vector<DatasetResult> run_experiment(const ExperimentConfig& cfg, bool benchmarks_only = false);

struct GridCandidate {
  std::size_t min_samples_leaf = 1;
  MaxFeatures max_features;
  double score = 0.0;
};

struct GridResult {
  std::vector<GridCandidate> table;
  std::size_t best = 0;
  Hyperparams best_hyperparams;
};

/// Candidates enumerate leaf sizes in order, then max_features in order;
/// the first minimum wins.
GridResult grid_search(const Dataset& train, const Hyperparams& base, const GridSpec& grid, std::uint64_t seed,
                       std::size_t threads);

// Command entry points. Each writes into cfg.out (or `out`) and returns the
// primary result. Timing information goes to metadata.json only.
std::vector<DatasetResult> cmd_run(const ExperimentConfig& cfg);
std::vector<DatasetResult> cmd_benchmarks(const ExperimentConfig& cfg);
std::vector<GridResult> cmd_grid_search(const ExperimentConfig& cfg);

struct AnalyticalJob {
  std::string name;
  analytical::Config config;
  std::vector<double> theta_grid;
  std::size_t mc_draws = 0;  // 0 disables the Monte Carlo check
  std::uint64_t seed = 0;
};

/// Accepts one job object or {"jobs": [...]}; keys are validated.
std::vector<AnalyticalJob> analytical_jobs_from_json(const nlohmann::json& j);
void cmd_analytical(const std::vector<AnalyticalJob>& jobs, const std::filesystem::path& out, std::size_t threads);

/// Reorders/zero-fills the columns of a freshly loaded feature table to match
/// a model's feature names. Missing one-hot levels become zero columns;
/// anything else that does not line up throws std::invalid_argument.
std::vector<double> align_features(const Dataset& data, const std::vector<std::string>& model_features);

/// One scenario record per test row.
nlohmann::json predict_scenarios(const Forest& forest, const MatrixView& x, std::optional<std::size_t> k,
                                 std::size_t threads);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace topkrf
