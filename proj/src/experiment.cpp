#include "topkrf/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "topkrf/forecast.hpp"
#include "topkrf/kernels.hpp"
#include "topkrf/model_io.hpp"
#include "topkrf/parallel.hpp"

namespace topkrf {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw std::invalid_argument(where + ": unknown key '" + key + "'");
    }
  }
}

std::string key_path(const std::string& where, const std::string& key) { return where + "." + key; }

double get_number(const json& j, const std::string& key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_number()) throw std::invalid_argument(key_path(where, key) + ": expected a number");
  return v.get<double>();
}

std::uint64_t get_unsigned(const json& j, const std::string& key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    throw std::invalid_argument(key_path(where, key) + ": expected a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

std::string get_string(const json& j, const std::string& key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_string()) throw std::invalid_argument(key_path(where, key) + ": expected a string");
  return v.get<std::string>();
}

std::vector<std::size_t> get_count_list(const json& j, const std::string& key, const std::string& where) {
  const auto& v = j.at(key);
  if (!v.is_array()) throw std::invalid_argument(key_path(where, key) + ": expected an array of counts");
  std::vector<std::size_t> out;
  for (const auto& e : v) {
    if (!e.is_number_unsigned() && !(e.is_number_integer() && e.get<std::int64_t>() >= 0)) {
      throw std::invalid_argument(key_path(where, key) + ": expected nonnegative integers");
    }
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

MaxFeatures max_features_from_json(const json& v, const std::string& where) {
  if (v.is_string()) return MaxFeatures::parse(v.get<std::string>());
  if (v.is_number()) {
    const double f = v.get<double>();
    if (!(f > 0.0 && f <= 1.0)) throw std::invalid_argument(where + ": fraction must lie in (0,1]");
    return MaxFeatures::of(f);
  }
  throw std::invalid_argument(where + ": expected \"sqrt\", \"all\" or a fraction");
}

synthetic::Spec synthetic_from_json(const json& j, const std::string& where) {
  check_keys(j, {"kind", "n", "p", "noise", "seed"}, where);
  synthetic::Spec s;
  if (j.contains("kind")) s.kind = get_string(j, "kind", where);
  if (s.kind != "friedman1" && s.kind != "noise" && s.kind != "linear") {
    throw std::invalid_argument(key_path(where, "kind") + ": unknown generator '" + s.kind + "'");
  }
  if (j.contains("n")) s.n = get_unsigned(j, "n", where);
  if (j.contains("p")) s.p = get_unsigned(j, "p", where);
  if (j.contains("noise")) s.noise = get_number(j, "noise", where);
  if (j.contains("seed")) s.seed = get_unsigned(j, "seed", where);
  return s;
}

std::string num(double v) { return fmt::format("{}", v); }

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double ratio(double a, double b) {
  if (b == 0.0) throw std::domain_error("relative score with zero reference mean");
  return a / b;
}

std::string safe_name(const std::string& name) {
  std::string out;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    out += ok ? c : '_';
  }
  return out.empty() ? std::string("dataset") : out;
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_metadata(const std::filesystem::path& out, const std::string& command, std::size_t threads,
                    const json& seconds) {
  json meta;
  meta["command"] = command;
  meta["timestamp"] = timestamp_utc();
  meta["simd"] = std::string(kernels::isa_name(kernels::active_isa()));
  meta["threads"] = resolve_threads(threads);
  meta["seconds"] = seconds;
  write_json(out / "metadata.json", meta);
}

/// Mean score of full or Top-k forecasts of a fitted forest on `test`.
double mean_forecast_score(const Forest& forest, const Dataset& test, GridSpec::Target target, std::size_t k,
                           ScoreRule rule, std::size_t threads) {
  const auto weights = forest_weights_batch(forest, test.view(), threads);
  const auto support = forest.shared_response();
  std::vector<double> scores(test.n());
  parallel_for(test.n(), threads, [&](std::size_t i) {
    ForecastDistribution full(support, weights[i]);
    const double y = test.response()[i];
    scores[i] = target == GridSpec::Target::full ? score(full, y, rule) : score(topk_sparsify(full, k), y, rule);
  });
  return mean_of(scores);
}

}  // namespace

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// ---------------------------------------------------------------- manifest

std::vector<DatasetEntry> parse_manifest(const json& j, const std::filesystem::path& base_dir) {
  const json* list = &j;
  if (j.is_object()) {
    check_keys(j, {"datasets"}, "manifest");
    if (!j.contains("datasets")) throw std::invalid_argument("manifest: missing key 'datasets'");
    list = &j.at("datasets");
  }
  if (!list->is_array()) throw std::invalid_argument("manifest.datasets: expected an array");
  if (list->empty()) throw std::invalid_argument("manifest.datasets: no datasets listed");

  std::vector<DatasetEntry> out;
  for (std::size_t i = 0; i < list->size(); ++i) {
    const json& e = (*list)[i];
    const std::string where = fmt::format("manifest.datasets[{}]", i);
    check_keys(e, {"name", "path", "target", "categorical", "subsample", "synthetic"}, where);
    DatasetEntry d;
    if (e.contains("synthetic")) {
      if (e.contains("path")) throw std::invalid_argument(where + ": give either 'path' or 'synthetic', not both");
      d.synthetic = synthetic_from_json(e.at("synthetic"), key_path(where, "synthetic"));
      d.target = "y";
    } else {
      if (!e.contains("path")) throw std::invalid_argument(where + ": missing key 'path'");
      if (!e.contains("target")) throw std::invalid_argument(where + ": missing key 'target'");
      d.path = get_string(e, "path", where);
      if (d.path.is_relative() && !base_dir.empty()) d.path = base_dir / d.path;
      d.target = get_string(e, "target", where);
    }
    if (e.contains("name")) {
      d.name = get_string(e, "name", where);
    } else {
      d.name = d.synthetic ? d.synthetic->kind : d.path.stem().string();
    }
    if (e.contains("categorical")) {
      const auto policy = get_string(e, "categorical", where);
      if (policy == "one_hot") {
        d.categorical = CategoricalPolicy::one_hot;
      } else if (policy == "reject") {
        d.categorical = CategoricalPolicy::reject;
      } else {
        throw std::invalid_argument(key_path(where, "categorical") + ": expected \"one_hot\" or \"reject\"");
      }
    }
    if (e.contains("subsample")) {
      d.subsample = get_number(e, "subsample", where);
      if (!(d.subsample > 0.0 && d.subsample <= 1.0)) {
        throw std::invalid_argument(key_path(where, "subsample") + ": must lie in (0,1]");
      }
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<DatasetEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("manifest " + path.string() + ": " + e.what());
  }
  return parse_manifest(j, path.parent_path());
}

Dataset load_entry(const DatasetEntry& entry, std::uint64_t seed) {
  Dataset d = entry.synthetic ? synthetic::generate(*entry.synthetic) : load_csv(entry.path, entry.target, entry.categorical);
  if (entry.subsample < 1.0) {
    const std::size_t dropped = d.dropped_rows();
    d = subsample(d, entry.subsample, seed);
    d.set_dropped_rows(dropped);
  }
  return d;
}

// ---------------------------------------------------------------- configs

void GridSpec::validate() const {
  if (min_samples_leaf.empty()) throw std::invalid_argument("grid.min_samples_leaf: no candidates");
  if (max_features.empty()) throw std::invalid_argument("grid.max_features: no candidates");
  for (auto leaf : min_samples_leaf) {
    if (leaf == 0) throw std::invalid_argument("grid.min_samples_leaf: candidates must be >= 1");
  }
  if (cv == Cv::kfold && folds < 2) throw std::invalid_argument("grid.folds: need at least 2 folds");
  if (cv == Cv::holdout && !(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw std::invalid_argument("grid.holdout_fraction: must lie in (0,1)");
  }
  if (tune_target == Target::topk && tune_k == 0) throw std::invalid_argument("grid.tune_k: must be >= 1");
  if (tune_rule == ScoreRule::ae) throw std::invalid_argument("grid.tune_rule: expected \"crps\" or \"se\"");
  if (!(train_subsample > 0.0 && train_subsample <= 1.0)) {
    throw std::invalid_argument("grid.train_subsample: must lie in (0,1]");
  }
}

GridSpec grid_spec_from_json(const json& j) {
  const std::string where = "grid";
  check_keys(j,
             {"min_samples_leaf", "max_features", "cv", "folds", "holdout_fraction", "tune_target", "tune_k",
              "tune_rule", "train_subsample"},
             where);
  GridSpec g;
  if (j.contains("min_samples_leaf")) g.min_samples_leaf = get_count_list(j, "min_samples_leaf", where);
  if (j.contains("max_features")) {
    const auto& v = j.at("max_features");
    if (!v.is_array()) throw std::invalid_argument("grid.max_features: expected an array");
    g.max_features.clear();
    for (const auto& e : v) g.max_features.push_back(max_features_from_json(e, "grid.max_features"));
  }
  if (j.contains("cv")) {
    const auto cv = get_string(j, "cv", where);
    if (cv == "kfold") {
      g.cv = GridSpec::Cv::kfold;
    } else if (cv == "holdout") {
      g.cv = GridSpec::Cv::holdout;
    } else {
      throw std::invalid_argument("grid.cv: expected \"kfold\" or \"holdout\"");
    }
  }
  if (j.contains("folds")) g.folds = get_unsigned(j, "folds", where);
  if (j.contains("holdout_fraction")) g.holdout_fraction = get_number(j, "holdout_fraction", where);
  if (j.contains("tune_target")) {
    const auto t = get_string(j, "tune_target", where);
    if (t == "full") {
      g.tune_target = GridSpec::Target::full;
    } else if (t == "topk") {
      g.tune_target = GridSpec::Target::topk;
    } else {
      throw std::invalid_argument("grid.tune_target: expected \"full\" or \"topk\"");
    }
  }
  if (j.contains("tune_k")) g.tune_k = get_unsigned(j, "tune_k", where);
  if (j.contains("tune_rule")) {
    try {
      g.tune_rule = parse_score_rule(get_string(j, "tune_rule", where));
    } catch (const std::invalid_argument&) {
      throw std::invalid_argument("grid.tune_rule: expected \"crps\" or \"se\"");
    }
  }
  if (j.contains("train_subsample")) g.train_subsample = get_number(j, "train_subsample", where);
  g.validate();
  return g;
}

void ExperimentConfig::validate() const {
  if (k_list.empty()) throw std::invalid_argument("k_list: must not be empty");
  for (std::size_t i = 0; i < k_list.size(); ++i) {
    if (k_list[i] == 0) throw std::invalid_argument("k_list: counts must be >= 1");
    if (i > 0 && k_list[i] <= k_list[i - 1]) {
      throw std::invalid_argument("k_list: must be strictly ascending without duplicates");
    }
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("train_fraction: must lie in (0,1)");
  hyperparams.validate();
  grid.validate();
}

ExperimentConfig experiment_config_from_json(const json& j, const std::filesystem::path& base_dir) {
  const std::string where = "config";
  check_keys(j, {"manifest", "datasets", "k_list", "hyperparams", "train_fraction", "seed", "threads", "out", "grid"},
             where);
  ExperimentConfig cfg;
  if (j.contains("manifest") && j.contains("datasets")) {
    throw std::invalid_argument("config: give either 'manifest' or 'datasets', not both");
  }
  if (j.contains("manifest")) {
    std::filesystem::path p = get_string(j, "manifest", where);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    cfg.datasets = load_manifest(p);
  } else if (j.contains("datasets")) {
    cfg.datasets = parse_manifest(json{{"datasets", j.at("datasets")}}, base_dir);
  }
  if (j.contains("k_list")) cfg.k_list = get_count_list(j, "k_list", where);
  if (j.contains("hyperparams")) {
    try {
      cfg.hyperparams = hyperparams_from_json(j.at("hyperparams"));
    } catch (const std::exception& e) {
      throw std::invalid_argument(std::string("config.hyperparams: ") + e.what());
    }
  }
  if (j.contains("train_fraction")) cfg.train_fraction = get_number(j, "train_fraction", where);
  if (j.contains("seed")) cfg.seed = get_unsigned(j, "seed", where);
  if (j.contains("threads")) cfg.threads = get_unsigned(j, "threads", where);
  if (j.contains("out")) {
    std::filesystem::path p = get_string(j, "out", where);
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    cfg.out = p;
  }
  if (j.contains("grid")) cfg.grid = grid_spec_from_json(j.at("grid"));
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------- evaluation

double SplitEvaluation::mean_crps_full() const { return mean_of(crps_full); }
double SplitEvaluation::mean_se_full() const { return mean_of(se_full); }
double SplitEvaluation::rel_crps(std::size_t j) const { return ratio(mean_of(crps_topk.at(j)), mean_crps_full()); }
double SplitEvaluation::rel_se(std::size_t j) const { return ratio(mean_of(se_topk.at(j)), mean_se_full()); }
double SplitEvaluation::rel_crps_median() const { return ratio(mean_of(crps_median), mean_crps_full()); }
double SplitEvaluation::rel_crps_unconditional() const {
  return ratio(mean_of(crps_unconditional), mean_crps_full());
}

SplitEvaluation evaluate_split(const Dataset& train, const Dataset& test, const Hyperparams& hp,
                               const std::vector<std::size_t>& k_list, std::size_t threads) {
  if (test.p() != train.p()) throw std::invalid_argument("evaluate_split: train/test feature counts differ");
  const Forest forest = fit_forest(train, hp, threads);
  const auto weights = forest_weights_batch(forest, test.view(), threads);
  const auto support = forest.shared_response();
  const auto uncond = unconditional_dist(support);

  const std::size_t m = test.n();
  const std::size_t nk = k_list.size();
  SplitEvaluation ev;
  ev.k_list = k_list;
  ev.outcomes = test.response();
  ev.crps_full.assign(m, 0.0);
  ev.se_full.assign(m, 0.0);
  ev.crps_topk.assign(nk, std::vector<double>(m, 0.0));
  ev.se_topk.assign(nk, std::vector<double>(m, 0.0));
  ev.crps_median.assign(m, 0.0);
  ev.crps_unconditional.assign(m, 0.0);

  parallel_for(m, threads, [&](std::size_t i) {
    const double y = ev.outcomes[i];
    ForecastDistribution full(support, weights[i]);
    ev.crps_full[i] = crps_wecdf(full, y);
    ev.se_full[i] = se_score(full, y);
    for (std::size_t j = 0; j < nk; ++j) {
      const auto top = topk_sparsify(full, k_list[j]);
      ev.crps_topk[j][i] = crps_wecdf(top, y);
      ev.se_topk[j][i] = se_score(top, y);
    }
    ev.crps_median[i] = crps_wecdf(deterministic_median(full), y);
    ev.crps_unconditional[i] = crps_wecdf(uncond, y);
  });
  ev.weight_sums = weight_sum_profile(weights, k_list);
  return ev;
}

double lower_median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("lower_median of an empty list");
  const std::size_t mid = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  return values[mid];
}

std::vector<DatasetResult> run_experiment(const ExperimentConfig& cfg, bool benchmarks_only) {
  cfg.validate();
  std::vector<std::size_t> k_list = benchmarks_only ? std::vector<std::size_t>{3} : cfg.k_list;
  Hyperparams hp = cfg.hyperparams;
  hp.seed = cfg.seed;

  std::vector<DatasetResult> results;
  for (const auto& entry : cfg.datasets) {
    DatasetResult r;
    r.name = entry.name;
    const auto start = std::chrono::steady_clock::now();
    try {
      const Dataset data = load_entry(entry, cfg.seed);
      SplitSpec split;
      split.train_fraction = cfg.train_fraction;
      split.seed = cfg.seed;
      const auto tt = train_test_split(data, split);
      r.n_train = tt.train.n();
      r.n_test = tt.test.n();
      r.dropped_rows = data.dropped_rows();
      r.eval = evaluate_split(tt.train, tt.test, hp, k_list, cfg.threads);
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    results.push_back(std::move(r));
  }
  return results;
}

// ---------------------------------------------------------------- grid search

GridResult grid_search(const Dataset& train, const Hyperparams& base, const GridSpec& grid, std::uint64_t seed,
                       std::size_t threads) {
  grid.validate();
  std::vector<std::pair<Dataset, Dataset>> splits;
  if (grid.cv == GridSpec::Cv::kfold) {
    const auto folds = kfold_indices(train.n(), grid.folds, seed);
    for (std::size_t f = 0; f < folds.size(); ++f) {
      std::vector<std::size_t> rest;
      for (std::size_t g = 0; g < folds.size(); ++g) {
        if (g != f) rest.insert(rest.end(), folds[g].begin(), folds[g].end());
      }
      std::sort(rest.begin(), rest.end());
      if (rest.empty()) throw std::invalid_argument(fmt::format("grid search: fold {} leaves an empty train split", f));
      std::vector<std::size_t> held = folds[f];
      std::sort(held.begin(), held.end());
      splits.emplace_back(train.select(rest), train.select(held));
    }
  } else {
    auto tt = holdout_split(train, grid.holdout_fraction, seed);
    if (tt.train.n() == 0) throw std::invalid_argument("grid search: holdout leaves an empty train split");
    splits.emplace_back(std::move(tt.train), std::move(tt.test));
  }

  GridResult out;
  for (auto leaf : grid.min_samples_leaf) {
    for (const auto& mf : grid.max_features) {
      Hyperparams hp = base;
      hp.min_samples_leaf = leaf;
      hp.max_features = mf;
      hp.seed = seed;
      hp.validate();
      double total = 0.0;
      for (const auto& [fit_part, eval_part] : splits) {
        const Forest forest = fit_forest(fit_part, hp, threads);
        total += mean_forecast_score(forest, eval_part, grid.tune_target, grid.tune_k, grid.tune_rule, threads);
      }
      out.table.push_back({leaf, mf, total / static_cast<double>(splits.size())});
    }
  }
  for (std::size_t i = 1; i < out.table.size(); ++i) {
    if (out.table[i].score < out.table[out.best].score) out.best = i;
  }
  out.best_hyperparams = base;
  out.best_hyperparams.min_samples_leaf = out.table[out.best].min_samples_leaf;
  out.best_hyperparams.max_features = out.table[out.best].max_features;
  out.best_hyperparams.seed = seed;
  return out;
}

// ---------------------------------------------------------------- commands

std::vector<DatasetResult> cmd_run(const ExperimentConfig& cfg) {
  auto results = run_experiment(cfg, false);
  const auto& ks = cfg.k_list;

  std::string csv = "dataset,n_train,n_test,crps_full,se_full";
  for (auto k : ks) csv += fmt::format(",rel_crps_top{}", k);
  for (auto k : ks) csv += fmt::format(",rel_se_top{}", k);
  for (auto k : ks) csv += fmt::format(",wsum_top{}", k);
  csv += "\n";

  json doc;
  doc["k_list"] = ks;
  doc["datasets"] = json::array();
  json seconds = json::object();
  std::vector<std::vector<double>> rel_crps(ks.size()), rel_se(ks.size()), wsums(ks.size());

  for (std::size_t d = 0; d < results.size(); ++d) {
    const auto& r = results[d];
    seconds[fmt::format("{}_{}", d, r.name)] = r.seconds;
    json jr;
    jr["name"] = r.name;
    if (r.error) {
      jr["error"] = *r.error;
      doc["datasets"].push_back(jr);
      continue;
    }
    const auto& ev = r.eval;
    jr["n_train"] = r.n_train;
    jr["n_test"] = r.n_test;
    jr["dropped_rows"] = r.dropped_rows;
    jr["crps_full"] = ev.mean_crps_full();
    jr["se_full"] = ev.mean_se_full();
    jr["rel_crps"] = json::array();
    jr["rel_se"] = json::array();
    jr["weight_sums"] = ev.weight_sums;
    csv += fmt::format("{},{},{},{},{}", r.name, r.n_train, r.n_test, num(ev.mean_crps_full()), num(ev.mean_se_full()));
    for (std::size_t j = 0; j < ks.size(); ++j) {
      rel_crps[j].push_back(ev.rel_crps(j));
      jr["rel_crps"].push_back(ev.rel_crps(j));
      csv += "," + num(ev.rel_crps(j));
    }
    for (std::size_t j = 0; j < ks.size(); ++j) {
      rel_se[j].push_back(ev.rel_se(j));
      jr["rel_se"].push_back(ev.rel_se(j));
      csv += "," + num(ev.rel_se(j));
    }
    for (std::size_t j = 0; j < ks.size(); ++j) {
      wsums[j].push_back(ev.weight_sums[j]);
      csv += "," + num(ev.weight_sums[j]);
    }
    csv += "\n";
    doc["datasets"].push_back(jr);

    std::string cases = "test_index,y,crps_full,se_full";
    for (auto k : ks) cases += fmt::format(",crps_top{},se_top{}", k, k);
    cases += ",crps_median,crps_unconditional\n";
    for (std::size_t i = 0; i < ev.outcomes.size(); ++i) {
      cases += fmt::format("{},{},{},{}", i, num(ev.outcomes[i]), num(ev.crps_full[i]), num(ev.se_full[i]));
      for (std::size_t j = 0; j < ks.size(); ++j) {
        cases += "," + num(ev.crps_topk[j][i]) + "," + num(ev.se_topk[j][i]);
      }
      cases += "," + num(ev.crps_median[i]) + "," + num(ev.crps_unconditional[i]) + "\n";
    }
    write_text(cfg.out / "cases" / fmt::format("{}_{}.csv", d, safe_name(r.name)), cases);
  }

  if (!rel_crps.front().empty()) {
    json med;
    med["rel_crps"] = json::array();
    med["rel_se"] = json::array();
    med["weight_sums"] = json::array();
    csv += "median,,,,";
    for (const auto& v : rel_crps) {
      med["rel_crps"].push_back(lower_median(v));
      csv += "," + num(lower_median(v));
    }
    for (const auto& v : rel_se) {
      med["rel_se"].push_back(lower_median(v));
      csv += "," + num(lower_median(v));
    }
    for (const auto& v : wsums) {
      med["weight_sums"].push_back(lower_median(v));
      csv += "," + num(lower_median(v));
    }
    csv += "\n";
    doc["median"] = med;
  }

  write_text(cfg.out / "run_results.csv", csv);
  write_json(cfg.out / "run_results.json", doc);
  write_metadata(cfg.out, "run", cfg.threads, seconds);
  return results;
}

std::vector<DatasetResult> cmd_benchmarks(const ExperimentConfig& cfg) {
  auto results = run_experiment(cfg, true);
  std::string csv = "dataset,crps_full,rel_crps_median,rel_crps_unconditional,rel_crps_top3\n";
  json doc;
  doc["datasets"] = json::array();
  json seconds = json::object();
  for (std::size_t d = 0; d < results.size(); ++d) {
    const auto& r = results[d];
    seconds[fmt::format("{}_{}", d, r.name)] = r.seconds;
    json jr;
    jr["name"] = r.name;
    if (r.error) {
      jr["error"] = *r.error;
    } else {
      const auto& ev = r.eval;
      jr["crps_full"] = ev.mean_crps_full();
      jr["rel_crps_median"] = ev.rel_crps_median();
      jr["rel_crps_unconditional"] = ev.rel_crps_unconditional();
      jr["rel_crps_top3"] = ev.rel_crps(0);
      csv += fmt::format("{},{},{},{},{}\n", r.name, num(ev.mean_crps_full()), num(ev.rel_crps_median()),
                         num(ev.rel_crps_unconditional()), num(ev.rel_crps(0)));
    }
    doc["datasets"].push_back(jr);
  }
  write_text(cfg.out / "benchmarks.csv", csv);
  write_json(cfg.out / "benchmarks.json", doc);
  write_metadata(cfg.out, "benchmarks", cfg.threads, seconds);
  return results;
}

std::vector<GridResult> cmd_grid_search(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<GridResult> results;
  std::string csv = "dataset,min_samples_leaf,max_features,cv_score,selected\n";
  json best = json::object();
  best["datasets"] = json::array();
  json seconds = json::object();
  for (std::size_t d = 0; d < cfg.datasets.size(); ++d) {
    const auto& entry = cfg.datasets[d];
    const auto start = std::chrono::steady_clock::now();
    json jb;
    jb["name"] = entry.name;
    try {
      const Dataset data = load_entry(entry, cfg.seed);
      SplitSpec split;
      split.train_fraction = cfg.train_fraction;
      split.seed = cfg.seed;
      Dataset train = train_test_split(data, split).train;
      if (cfg.grid.train_subsample < 1.0) train = subsample(train, cfg.grid.train_subsample, cfg.seed);
      auto g = grid_search(train, cfg.hyperparams, cfg.grid, cfg.seed, cfg.threads);
      for (std::size_t c = 0; c < g.table.size(); ++c) {
        const auto& row = g.table[c];
        csv += fmt::format("{},{},{},{},{}\n", entry.name, row.min_samples_leaf, row.max_features.to_string(),
                           num(row.score), c == g.best ? 1 : 0);
      }
      jb["hyperparams"] = hyperparams_to_json(g.best_hyperparams);
      jb["cv_score"] = g.table[g.best].score;
      results.push_back(std::move(g));
    } catch (const std::exception& e) {
      jb["error"] = e.what();
      results.emplace_back();
    }
    best["datasets"].push_back(jb);
    seconds[fmt::format("{}_{}", d, entry.name)] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  write_text(cfg.out / "grid.csv", csv);
  write_json(cfg.out / "best.json", best);
  write_metadata(cfg.out, "grid-search", cfg.threads, seconds);
  return results;
}

// ---------------------------------------------------------------- analytical

std::vector<AnalyticalJob> analytical_jobs_from_json(const json& j) {
  std::vector<const json*> items;
  if (j.is_object() && j.contains("jobs")) {
    check_keys(j, {"jobs"}, "analytical");
    if (!j.at("jobs").is_array()) throw std::invalid_argument("analytical.jobs: expected an array");
    for (const auto& e : j.at("jobs")) items.push_back(&e);
  } else {
    items.push_back(&j);
  }
  if (items.empty()) throw std::invalid_argument("analytical.jobs: no jobs listed");

  std::vector<AnalyticalJob> jobs;
  std::set<std::string> names;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const json& e = *items[i];
    const std::string where = items.size() == 1 && !j.contains("jobs") ? "analytical" : fmt::format("analytical.jobs[{}]", i);
    check_keys(e, {"name", "n", "k", "theta_star", "theta", "d1", "d2", "theta_grid", "mc_draws", "seed"}, where);
    AnalyticalJob job;
    job.name = e.contains("name") ? get_string(e, "name", where) : fmt::format("job{}", i);
    if (!names.insert(job.name).second) throw std::invalid_argument(where + ".name: duplicate job name");
    auto& c = job.config;
    if (e.contains("n")) c.n = get_unsigned(e, "n", where);
    if (e.contains("k")) c.k = get_unsigned(e, "k", where);
    if (e.contains("theta_star")) c.theta_star = get_number(e, "theta_star", where);
    if (e.contains("theta")) c.theta = get_number(e, "theta", where);
    if (e.contains("d1")) c.d1 = get_number(e, "d1", where);
    if (e.contains("d2")) c.d2 = get_number(e, "d2", where);
    try {
      c.validate();
    } catch (const std::exception& ex) {
      throw std::invalid_argument(where + ": invalid config: " + ex.what());
    }
    job.theta_grid = analytical::make_grid(0.0, 1.0, 0.01);
    if (e.contains("theta_grid")) {
      const auto& g = e.at("theta_grid");
      const std::string gw = key_path(where, "theta_grid");
      if (g.is_array()) {
        job.theta_grid.clear();
        for (const auto& t : g) {
          if (!t.is_number()) throw std::invalid_argument(gw + ": expected numbers");
          job.theta_grid.push_back(t.get<double>());
        }
      } else if (g.is_object()) {
        check_keys(g, {"start", "stop", "step"}, gw);
        for (const char* key : {"start", "stop", "step"}) {
          if (!g.contains(key)) throw std::invalid_argument(gw + ": missing key '" + key + "'");
        }
        job.theta_grid = analytical::make_grid(get_number(g, "start", gw), get_number(g, "stop", gw),
                                               get_number(g, "step", gw));
      } else {
        throw std::invalid_argument(gw + ": expected an array or {start, stop, step}");
      }
      if (job.theta_grid.empty()) throw std::invalid_argument(gw + ": empty grid");
      for (double t : job.theta_grid) {
        if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument(gw + ": values must lie in [0,1]");
      }
    }
    if (e.contains("mc_draws")) job.mc_draws = get_unsigned(e, "mc_draws", where);
    if (job.mc_draws != 0 && job.mc_draws < 1000) {
      throw std::invalid_argument(where + ".mc_draws: use 0 or at least 1000 draws");
    }
    if (e.contains("seed")) job.seed = get_unsigned(e, "seed", where);
    jobs.push_back(std::move(job));
  }
  return jobs;
}

void cmd_analytical(const std::vector<AnalyticalJob>& jobs, const std::filesystem::path& out, std::size_t threads) {
  json summary;
  summary["jobs"] = json::array();
  json seconds = json::object();
  for (const auto& job : jobs) {
    const auto start = std::chrono::steady_clock::now();
    const auto& c = job.config;
    c.validate();
    const auto sweep = analytical::theta_sweep(c, job.theta_grid);
    std::string csv = "theta,expected_crps,expected_se\n";
    for (const auto& row : sweep.rows) {
      csv += fmt::format("{},{},{}\n", num(row.theta), num(row.expected_crps), num(row.expected_se));
    }
    write_text(out / (safe_name(job.name) + "_sweep.csv"), csv);

    std::string wcsv = "index,true_weight,estimated_weight\n";
    for (const auto& row : analytical::weight_draw_dump(c, job.seed)) {
      wcsv += fmt::format("{},{},{}\n", row.index, num(row.true_weight), num(row.estimated_weight));
    }
    write_text(out / (safe_name(job.name) + "_weights.csv"), wcsv);

    json js;
    js["name"] = job.name;
    js["config"] = {{"n", c.n}, {"k", c.k}, {"theta_star", c.theta_star}, {"theta", c.theta}, {"d1", c.d1},
                    {"d2", c.d2}};
    js["seed"] = job.seed;
    js["expected_se"] = analytical::expected_se_closed(c);
    js["expected_crps"] = analytical::expected_crps_closed(c);
    js["argmin_theta"] = sweep.argmin_theta;
    js["crps_at_one"] = sweep.crps_at_one;
    js["worse_than_one_boundary"] =
        sweep.worse_than_one_boundary ? json(*sweep.worse_than_one_boundary) : json(nullptr);
    if (job.mc_draws > 0) {
      const auto mc = analytical::mc_expected_scores(c, job.mc_draws, job.seed, threads);
      js["monte_carlo"] = {{"draws", mc.draws},         {"se_mean", mc.se_mean},
                           {"se_stderr", mc.se_stderr}, {"crps_mean", mc.crps_mean},
                           {"crps_stderr", mc.crps_stderr}};
    }
    summary["jobs"].push_back(js);
    seconds[job.name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  write_json(out / "summary.json", summary);
  write_metadata(out, "analytical", threads, seconds);
}

// ---------------------------------------------------------------- prediction

std::vector<double> align_features(const Dataset& data, const std::vector<std::string>& model_features) {
  auto base_of = [](const std::string& name) -> std::optional<std::string> {
    const auto eq = name.find('=');
    if (eq == std::string::npos) return std::nullopt;
    return name.substr(0, eq);
  };
  std::map<std::string, std::size_t> data_col;
  for (std::size_t j = 0; j < data.p(); ++j) data_col.emplace(data.feature_names()[j], j);
  std::set<std::string> model_set(model_features.begin(), model_features.end());
  std::set<std::string> model_bases;
  for (const auto& f : model_features) {
    if (auto b = base_of(f)) model_bases.insert(*b);
  }
  std::set<std::string> data_bases;
  for (const auto& f : data.feature_names()) {
    if (auto b = base_of(f)) data_bases.insert(*b);
  }

  for (const auto& f : data.feature_names()) {
    if (model_set.count(f)) continue;
    const auto b = base_of(f);
    if (b && model_bases.count(*b)) {
      throw std::invalid_argument("schema mismatch: level '" + f.substr(b->size() + 1) + "' of column '" + *b +
                                  "' was not seen in training");
    }
    throw std::invalid_argument("schema mismatch: unexpected column '" + f + "'");
  }

  const std::size_t p = model_features.size();
  std::vector<std::ptrdiff_t> source(p, -1);
  for (std::size_t j = 0; j < p; ++j) {
    const auto& f = model_features[j];
    if (auto it = data_col.find(f); it != data_col.end()) {
      source[j] = static_cast<std::ptrdiff_t>(it->second);
      continue;
    }
    const auto b = base_of(f);
    if (b && data_bases.count(*b)) continue;  // level absent from this file
    throw std::invalid_argument("schema mismatch: missing feature '" + f + "'");
  }

  std::vector<double> x(data.n() * p, 0.0);
  for (std::size_t i = 0; i < data.n(); ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      if (source[j] >= 0) x[i * p + j] = data.feature(i, static_cast<std::size_t>(source[j]));
    }
  }
  return x;
}

json predict_scenarios(const Forest& forest, const MatrixView& x, std::optional<std::size_t> k, std::size_t threads) {
  if (x.cols != forest.p()) {
    throw std::invalid_argument(fmt::format("schema mismatch: model has {} features, data has {}", forest.p(), x.cols));
  }
  if (k && *k == 0) throw std::invalid_argument("k must be >= 1");
  const auto weights = forest_weights_batch(forest, x, threads);
  const auto support = forest.shared_response();
  std::vector<json> rows(x.rows);
  parallel_for(x.rows, threads, [&](std::size_t i) {
    ForecastDistribution full(support, weights[i]);
    json r;
    r["test_index"] = i;
    r["mean"] = dist_mean(full);
    r["median"] = dist_quantile(full, 0.5);
    if (k) {
      const auto top = topk_sparsify(full, *k);
      r["k"] = *k;
      r["pre_normalization_sum"] = top.provenance().pre_normalization_sum;
      std::vector<std::size_t> order(top.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return top.weight(a) > top.weight(b); });
      json sc = json::array();
      for (auto j : order) {
        sc.push_back({{"train_index", top.weights().indices[j]}, {"weight", top.weight(j)}, {"y", top.value(j)}});
      }
      r["scenarios"] = std::move(sc);
    }
    rows[i] = std::move(r);
  });
  return json(std::move(rows));
}

}  // namespace topkrf
