// topkrf command-line front end.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "topkrf/dataset.hpp"
#include "topkrf/experiment.hpp"
#include "topkrf/forecast.hpp"
#include "topkrf/forest.hpp"
#include "topkrf/model_io.hpp"
#include "topkrf/scoring.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace topkrf;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string threads = "auto";
  std::optional<std::string> out;
  std::optional<std::string> config;
};

std::size_t parse_threads(const std::string& text) {
  if (text == "auto") return 0;
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || v == 0) throw std::invalid_argument("--threads expects a positive count or 'auto'");
  return static_cast<std::size_t>(v);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

ExperimentConfig load_config(const Globals& g) {
  if (!g.config) throw std::invalid_argument("this command needs --config <json path>");
  const fs::path path = *g.config;
  ExperimentConfig cfg = experiment_config_from_json(read_json(path), path.parent_path());
  if (cfg.datasets.empty()) throw std::invalid_argument("config: no datasets (set 'manifest' or 'datasets')");
  if (g.seed) cfg.seed = *g.seed;
  if (g.threads != "auto" || cfg.threads == 0) cfg.threads = parse_threads(g.threads);
  if (g.out) cfg.out = *g.out;
  return cfg;
}

void print_failures(const std::vector<DatasetResult>& results) {
  for (const auto& r : results) {
    if (r.error) std::cerr << fmt::format("warning: dataset '{}' skipped: {}\n", r.name, *r.error);
  }
}

void emit(const Globals& g, const std::string& file, const std::string& text) {
  if (g.out) {
    write_text(fs::path(*g.out) / file, text);
  } else {
    std::cout << text;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantile regression forests with Top-k weight sparsification"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Random seed (u64)");
  app.add_option("--threads", g.threads, "Worker threads: a count or 'auto'");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--config", g.config, "JSON configuration file");

  auto* run = app.add_subcommand("run", "Full RF vs Top-k scores for every dataset in the manifest");
  auto* bench = app.add_subcommand("benchmarks", "Median, unconditional and Top3 forecasts relative to the full RF");
  auto* grid = app.add_subcommand("grid-search", "Cross-validated hyperparameter search");
  auto* analytical = app.add_subcommand("analytical", "Sweeps of the stylized weight-estimation model");

  auto* train = app.add_subcommand("train", "Fit a forest on a CSV file and save it");
  std::string data_path, target, model_path;
  std::string categorical = "one_hot";
  Hyperparams hp;
  std::string max_features = "sqrt";
  std::optional<std::size_t> max_depth;
  train->add_option("--data", data_path, "Training CSV")->required();
  train->add_option("--target", target, "Response column")->required();
  train->add_option("--model", model_path, "Output model file")->required();
  train->add_option("--categorical", categorical, "one_hot or reject")
      ->check(CLI::IsMember({"one_hot", "reject"}));
  train->add_option("--n-trees", hp.n_trees, "Number of trees");
  train->add_option("--max-features", max_features, "sqrt, all or a fraction in (0,1]");
  train->add_option("--min-samples-leaf", hp.min_samples_leaf, "Minimum leaf size");
  train->add_option("--min-samples-split", hp.min_samples_split, "Minimum node size for splitting");
  train->add_option("--max-depth", max_depth, "Depth limit (unlimited by default)");

  auto* predict = app.add_subcommand("predict", "Forecast distributions and Top-k scenarios as JSON");
  std::optional<std::size_t> k;
  std::string drop;
  predict->add_option("--model", model_path, "Model file")->required();
  predict->add_option("--data", data_path, "Feature CSV")->required();
  predict->add_option("-k,--k", k, "Number of scenarios to keep");
  predict->add_option("--drop", drop, "Column to ignore (e.g. the response)");

  auto* score_cmd = app.add_subcommand("score", "Score forecasts against observed responses");
  std::string rule = "crps";
  score_cmd->add_option("--model", model_path, "Model file")->required();
  score_cmd->add_option("--data", data_path, "CSV with features and response")->required();
  score_cmd->add_option("--target", target, "Response column")->required();
  score_cmd->add_option("--rule", rule, "crps, se or ae")->check(CLI::IsMember({"crps", "se", "ae"}));
  score_cmd->add_option("-k,--k", k, "Score the Top-k forecast instead of the full one");

  auto* export_cmd = app.add_subcommand("export-json", "Dump a model as JSON");
  export_cmd->add_option("--model", model_path, "Model file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const auto cfg = load_config(g);
      print_failures(cmd_run(cfg));
    } else if (bench->parsed()) {
      const auto cfg = load_config(g);
      print_failures(cmd_benchmarks(cfg));
    } else if (grid->parsed()) {
      const auto cfg = load_config(g);
      cmd_grid_search(cfg);
    } else if (analytical->parsed()) {
      if (!g.config) throw std::invalid_argument("analytical needs --config <json path>");
      auto jobs = analytical_jobs_from_json(read_json(*g.config));
      if (g.seed) {
        for (auto& job : jobs) job.seed = *g.seed;
      }
      cmd_analytical(jobs, g.out ? fs::path(*g.out) : fs::path("results"), parse_threads(g.threads));
    } else if (train->parsed()) {
      hp.max_features = MaxFeatures::parse(max_features);
      hp.max_depth = max_depth;
      hp.seed = g.seed.value_or(0);
      const auto policy = categorical == "reject" ? CategoricalPolicy::reject : CategoricalPolicy::one_hot;
      const Dataset data = load_csv(data_path, target, policy);
      if (data.dropped_rows() > 0) {
        std::cerr << fmt::format("note: dropped {} rows with missing values\n", data.dropped_rows());
      }
      const Forest forest = fit_forest(data, hp, parse_threads(g.threads));
      save_forest(model_path, forest);
    } else if (predict->parsed()) {
      const Forest forest = load_forest(model_path);
      const Dataset data = load_csv_features(data_path, drop);
      const auto x = align_features(data, forest.feature_names());
      const MatrixView view{x, data.n(), forest.p()};
      const json out = predict_scenarios(forest, view, k, parse_threads(g.threads));
      emit(g, "predictions.json", out.dump(2) + "\n");
    } else if (score_cmd->parsed()) {
      const Forest forest = load_forest(model_path);
      const Dataset data = load_csv(data_path, target);
      const auto x = align_features(data, forest.feature_names());
      const MatrixView view{x, data.n(), forest.p()};
      const auto weights = forest_weights_batch(forest, view, parse_threads(g.threads));
      std::vector<ForecastDistribution> forecasts;
      forecasts.reserve(weights.size());
      for (const auto& w : weights) {
        ForecastDistribution full(forest.shared_response(), w);
        forecasts.push_back(k ? topk_sparsify(full, *k) : full);
      }
      const auto report = evaluate(forecasts, data.response(), parse_score_rule(rule));
      if (g.out) {
        write_text(fs::path(*g.out) / "scores.csv", report.to_csv());
        write_text(fs::path(*g.out) / "score.json", report.to_json().dump(2) + "\n");
      } else {
        std::cout << report.to_json().dump(2) << "\n";
      }
    } else if (export_cmd->parsed()) {
      emit(g, "model.json", forest_to_json(load_forest(model_path)).dump(2) + "\n");
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
