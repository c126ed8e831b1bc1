#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "oracles.hpp"
#include "topkrf/experiment.hpp"
#include "topkrf/model_io.hpp"

using namespace topkrf;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("topkrf_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) { return parse_csv_records(slurp(p)); }

DatasetEntry synthetic_entry(const std::string& name, const std::string& kind, std::size_t n, double noise,
                             std::uint64_t seed, std::size_t p = 10) {
  DatasetEntry e;
  e.name = name;
  e.target = "y";
  synthetic::Spec s;
  s.kind = kind;
  s.n = n;
  s.p = p;
  s.noise = noise;
  s.seed = seed;
  e.synthetic = s;
  return e;
}

ExperimentConfig small_config(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.hyperparams.n_trees = 30;
  cfg.seed = 5;
  cfg.out = out;
  cfg.threads = 1;
  return cfg;
}

}  // namespace

TEST_CASE("manifest parsing") {
  const auto m = parse_manifest(json::parse(R"([
    {"name": "a", "path": "data/a.csv", "target": "price"},
    {"synthetic": {"kind": "noise", "n": 50, "p": 3, "seed": 2}, "subsample": 0.5}
  ])"),
                                "/base");
  REQUIRE(m.size() == 2);
  CHECK(m[0].path == fs::path("/base/data/a.csv"));
  CHECK(m[0].target == "price");
  CHECK(m[1].name == "noise");
  CHECK(m[1].synthetic->n == 50);
  CHECK(m[1].subsample == 0.5);

  CHECK_THROWS_WITH(parse_manifest(json::parse(R"([{"path": "a.csv", "target": "y", "tagret": 1}])")),
                    doctest::Contains("tagret"));
  CHECK_THROWS_WITH(parse_manifest(json::parse(R"([{"path": "a.csv"}])")), doctest::Contains("target"));
  CHECK_THROWS_WITH(parse_manifest(json::parse(R"([{"synthetic": {"kind": "sine"}}])")), doctest::Contains("kind"));
  CHECK_THROWS_WITH(parse_manifest(json::parse(R"([{"path": "a.csv", "target": "y", "subsample": 2}])")),
                    doctest::Contains("subsample"));
  CHECK_THROWS(parse_manifest(json::parse("[]")));
}

TEST_CASE("experiment config parsing") {
  const auto cfg = experiment_config_from_json(json::parse(R"({
    "datasets": [{"synthetic": {"kind": "friedman1", "n": 100}}],
    "k_list": [1, 4], "seed": 3, "hyperparams": {"n_trees": 7},
    "grid": {"min_samples_leaf": [1, 5], "max_features": ["sqrt", 0.5], "cv": "holdout", "tune_target": "topk"}
  })"));
  CHECK(cfg.k_list == std::vector<std::size_t>{1, 4});
  CHECK(cfg.hyperparams.n_trees == 7);
  CHECK(cfg.grid.size() == 4);
  CHECK(cfg.grid.cv == GridSpec::Cv::holdout);

  CHECK_THROWS_WITH(experiment_config_from_json(json::parse(R"({"k_lst": [3]})")), doctest::Contains("k_lst"));
  CHECK_THROWS_WITH(experiment_config_from_json(json::parse(R"({"k_list": [5, 3]})")), doctest::Contains("k_list"));
  CHECK_THROWS_WITH(experiment_config_from_json(json::parse(R"({"k_list": [3, 3]})")), doctest::Contains("k_list"));
  CHECK_THROWS_WITH(experiment_config_from_json(json::parse(R"({"k_list": []})")), doctest::Contains("k_list"));
  CHECK_THROWS_WITH(experiment_config_from_json(json::parse(R"({"hyperparams": {"trees": 3}})")),
                    doctest::Contains("trees"));
  CHECK_THROWS_WITH(experiment_config_from_json(json::parse(R"({"grid": {"min_samples_leaf": []}})")),
                    doctest::Contains("min_samples_leaf"));
  CHECK_THROWS_WITH(experiment_config_from_json(json::parse(R"({"grid": {"cv": "loo"}})")), doctest::Contains("cv"));
  CHECK_THROWS_WITH(experiment_config_from_json(json::parse(R"({"seed": -1})")), doctest::Contains("seed"));
}

TEST_CASE("default grid has 44 candidates") {
  GridSpec g;
  CHECK(g.size() == 44);
  CHECK_NOTHROW(g.validate());
}

TEST_CASE("lower median") {
  CHECK(lower_median({3.0}) == 3.0);
  CHECK(lower_median({4.0, 1.0}) == 1.0);
  CHECK(lower_median({5.0, 1.0, 3.0}) == 3.0);
  CHECK(lower_median({4.0, 2.0, 1.0, 3.0}) == 2.0);
  CHECK_THROWS(lower_median({}));
}

TEST_CASE("k equal to the training size recovers the full forest exactly") {
  const auto out = scratch("run_kn");
  auto cfg = small_config(out);
  cfg.datasets = {synthetic_entry("f1", "friedman1", 100, 1.0, 1)};
  cfg.k_list = {3, 70};  // 70 = floor(0.7 * 100) training rows
  const auto results = cmd_run(cfg);
  REQUIRE(results.size() == 1);
  REQUIRE(!results[0].error);
  CHECK(results[0].eval.rel_crps(1) == 1.0);
  CHECK(results[0].eval.rel_se(1) == 1.0);

  const auto rows = read_csv(out / "run_results.csv");
  REQUIRE(rows.size() == 3);
  const auto& header = rows[0];
  const auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  CHECK(rows[1][col("rel_crps_top70")] == "1");
  CHECK(rows[1][col("rel_se_top70")] == "1");
  CHECK(rows[2][0] == "median");
}

TEST_CASE("relative scores are recomputable from the per-case files") {
  const auto out = scratch("run_cases");
  auto cfg = small_config(out);
  cfg.datasets = {synthetic_entry("lin", "linear", 200, 0.5, 2, 4), synthetic_entry("f1", "friedman1", 150, 1.0, 3)};
  cfg.k_list = {3, 10};
  cmd_run(cfg);
  const auto summary = json::parse(slurp(out / "run_results.json"));
  const auto cases = read_csv(out / "cases" / "1_f1.csv");
  const auto& h = cases[0];
  auto mean_col = [&](const std::string& name) {
    const auto c = static_cast<std::size_t>(std::find(h.begin(), h.end(), name) - h.begin());
    REQUIRE(c < h.size());
    double s = 0.0;
    for (std::size_t r = 1; r < cases.size(); ++r) s += std::stod(cases[r][c]);
    return s / static_cast<double>(cases.size() - 1);
  };
  const auto& ds = summary.at("datasets").at(1);
  CHECK(std::fabs(mean_col("crps_full") - ds.at("crps_full").get<double>()) < 1e-10);
  CHECK(std::fabs(mean_col("crps_top3") / mean_col("crps_full") - ds.at("rel_crps").at(0).get<double>()) < 1e-10);
  CHECK(std::fabs(mean_col("se_top10") / mean_col("se_full") - ds.at("rel_se").at(1).get<double>()) < 1e-10);
  CHECK(fs::exists(out / "metadata.json"));
}

TEST_CASE("identical entries give identical rows and reruns are byte-identical") {
  const auto out1 = scratch("run_det1");
  const auto out2 = scratch("run_det2");
  auto cfg = small_config(out1);
  cfg.datasets = {synthetic_entry("a", "friedman1", 120, 1.0, 4), synthetic_entry("a", "friedman1", 120, 1.0, 4)};
  cfg.k_list = {3, 5};
  cmd_run(cfg);
  const auto rows = read_csv(out1 / "run_results.csv");
  REQUIRE(rows.size() == 4);
  CHECK(rows[1] == rows[2]);

  cfg.out = out2;
  cfg.threads = 3;
  cmd_run(cfg);
  for (const char* f : {"run_results.csv", "run_results.json", "cases/0_a.csv", "cases/1_a.csv"}) {
    CHECK(slurp(out1 / f) == slurp(out2 / f));
  }
}

TEST_CASE("a failing dataset is recorded and the rest still run") {
  const auto out = scratch("run_fail");
  auto cfg = small_config(out);
  DatasetEntry missing;
  missing.name = "missing";
  missing.path = out / "does_not_exist.csv";
  missing.target = "y";
  cfg.datasets = {missing, synthetic_entry("ok", "linear", 80, 0.5, 1, 3)};
  const auto results = cmd_run(cfg);
  REQUIRE(results.size() == 2);
  CHECK(results[0].error.has_value());
  CHECK(!results[1].error.has_value());
  const auto summary = json::parse(slurp(out / "run_results.json"));
  CHECK(summary.at("datasets").at(0).contains("error"));
  CHECK(read_csv(out / "run_results.csv").size() == 3);
}

TEST_CASE("csv datasets from a manifest") {
  const auto dir = scratch("manifest_csv");
  {
    std::ofstream out(dir / "tiny.csv");
    out << "a,b,color,y\n";
    const char* colors[] = {"red", "blue", "green"};
    for (int i = 0; i < 90; ++i) out << fmt::format("{},{},{},{}\n", i % 7, (i * 13) % 11, colors[i % 3], i % 5 + 0.5 * (i % 7));
    out << "1,,red,2\n";
  }
  {
    std::ofstream out(dir / "manifest.json");
    out << R"({"datasets": [{"name": "tiny", "path": "tiny.csv", "target": "y"}]})";
  }
  auto cfg = small_config(dir / "out");
  cfg.datasets = load_manifest(dir / "manifest.json");
  const auto results = cmd_run(cfg);
  REQUIRE(!results[0].error);
  CHECK(results[0].dropped_rows == 1);
  CHECK(results[0].n_train == 63);
}

TEST_CASE("benchmarks on uninformative and predictable data") {
  const auto out = scratch("bench");
  auto cfg = small_config(out);
  cfg.hyperparams.n_trees = 100;
  cfg.datasets = {synthetic_entry("noise", "noise", 1500, 1.0, 1, 5),
                  synthetic_entry("smooth", "friedman1", 1500, 0.1, 2),
                  synthetic_entry("noisy", "friedman1", 1500, 3.0, 3)};
  const auto results = cmd_benchmarks(cfg);
  REQUIRE(results.size() == 3);
  for (const auto& r : results) REQUIRE(!r.error);
  const double u_noise = results[0].eval.rel_crps_unconditional();
  // A single split scatters by about 0.01 around the forest's systematic
  // overfit of pure noise, so the band is checked on a five-seed average.
  double u_avg = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto noise_cfg = small_config(scratch("bench_noise"));
    noise_cfg.hyperparams.n_trees = 300;
    noise_cfg.seed = seed;
    noise_cfg.datasets = {synthetic_entry("noise", "noise", 1500, 1.0, seed, 5)};
    const auto r = cmd_benchmarks(noise_cfg);
    REQUIRE(!r[0].error);
    u_avg += r[0].eval.rel_crps_unconditional() / 5.0;
  }
  MESSAGE("unconditional relative CRPS on pure noise, five-seed average: " << u_avg);
  CHECK(u_avg > 0.95);
  CHECK(u_avg < 1.05);
  CHECK(results[1].eval.rel_crps_unconditional() > 2.0);
  CHECK(results[2].eval.rel_crps_median() > 1.0);

  const auto rows = read_csv(out / "benchmarks.csv");
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == std::vector<std::string>{"dataset", "crps_full", "rel_crps_median", "rel_crps_unconditional",
                                            "rel_crps_top3"});
  CHECK(std::stod(rows[1][3]) == u_noise);
}

TEST_CASE("grid search") {
  const auto d = synthetic::friedman1(200, 1.0, 6);
  Hyperparams base;
  base.n_trees = 20;

  GridSpec one;
  one.min_samples_leaf = {4};
  one.max_features = {MaxFeatures::of(0.5)};
  const auto single = grid_search(d, base, one, 1, 1);
  REQUIRE(single.table.size() == 1);
  CHECK(single.best == 0);
  CHECK(single.best_hyperparams.min_samples_leaf == 4);
  CHECK(single.best_hyperparams.max_features == MaxFeatures::of(0.5));

  GridSpec g;
  g.min_samples_leaf = {1, 5, 30};
  g.max_features = {MaxFeatures::sqrt(), MaxFeatures::all()};
  const auto full = grid_search(d, base, g, 1, 1);
  REQUIRE(full.table.size() == 6);
  CHECK(full.table[0].min_samples_leaf == 1);
  CHECK(full.table[1].max_features == MaxFeatures::all());
  CHECK(full.table[2].min_samples_leaf == 5);
  for (const auto& c : full.table) CHECK(full.table[full.best].score <= c.score);
  for (std::size_t i = 0; i < full.best; ++i) CHECK(full.table[i].score > full.table[full.best].score);
  CHECK(grid_search(d, base, g, 1, 3).table[4].score == full.table[4].score);

  g.cv = GridSpec::Cv::holdout;
  CHECK(grid_search(d, base, g, 1, 1).table.size() == 6);

  // Top3 and the full forest may prefer different settings; the outcome is
  // reported rather than asserted.
  GridSpec topk = g;
  topk.tune_target = GridSpec::Target::topk;
  topk.tune_k = 3;
  const auto a = grid_search(d, base, g, 2, 1);
  const auto b = grid_search(d, base, topk, 2, 1);
  MESSAGE("full selects leaf=" << a.best_hyperparams.min_samples_leaf << " mtry="
                               << a.best_hyperparams.max_features.to_string() << "; top3 selects leaf="
                               << b.best_hyperparams.min_samples_leaf << " mtry="
                               << b.best_hyperparams.max_features.to_string());

  const auto tiny = synthetic::friedman1(3, 1.0, 1);
  GridSpec five;
  CHECK_THROWS(grid_search(tiny, base, five, 1, 1));
}

TEST_CASE("grid-search command writes the table and the selection") {
  const auto out = scratch("grid_cmd");
  auto cfg = small_config(out);
  cfg.hyperparams.n_trees = 10;
  cfg.datasets = {synthetic_entry("f1", "friedman1", 150, 1.0, 2)};
  cfg.grid.min_samples_leaf = {1, 10};
  cfg.grid.max_features = {MaxFeatures::sqrt()};
  cfg.grid.folds = 3;
  const auto res = cmd_grid_search(cfg);
  REQUIRE(res.size() == 1);
  const auto rows = read_csv(out / "grid.csv");
  CHECK(rows.size() == 3);
  const auto best = json::parse(slurp(out / "best.json"));
  CHECK(best.at("datasets").at(0).at("hyperparams").at("min_samples_leaf") == res[0].best_hyperparams.min_samples_leaf);
}

TEST_CASE("analytical jobs") {
  const auto jobs = analytical_jobs_from_json(json::parse(R"({"jobs": [
    {"name": "dense_blocks", "n": 20, "k": 5, "theta_star": 0.8, "theta": 0.8, "d1": 1, "d2": 1, "seed": 3},
    {"name": "vague_tail", "n": 100, "k": 5, "theta_star": 0.8, "d1": 1000, "d2": 0.01,
     "theta_grid": {"start": 0, "stop": 1, "step": 0.01}, "mc_draws": 2000}
  ]})"));
  REQUIRE(jobs.size() == 2);
  const auto out = scratch("analytical");
  cmd_analytical(jobs, out, 1);

  const auto dump = read_csv(out / "dense_blocks_weights.csv");
  REQUIRE(dump.size() == 21);
  CHECK(dump[0] == std::vector<std::string>{"index", "true_weight", "estimated_weight"});
  CHECK(std::stod(dump[1][1]) == doctest::Approx(0.16).epsilon(1e-14));
  CHECK(std::stod(dump[20][1]) == doctest::Approx(0.2 / 15).epsilon(1e-14));

  const auto sweep = read_csv(out / "vague_tail_sweep.csv");
  REQUIRE(sweep.size() == 102);
  for (std::size_t i = 2; i < sweep.size(); ++i) CHECK(std::stod(sweep[i][0]) > std::stod(sweep[i - 1][0]));
  const auto summary = json::parse(slurp(out / "summary.json"));
  const auto& right = summary.at("jobs").at(1);
  CHECK(right.at("crps_at_one").get<double>() < std::stod(sweep[81][1]));
  CHECK(right.contains("monte_carlo"));

  CHECK_THROWS_WITH(analytical_jobs_from_json(json::parse(R"({"n": 10, "k": 9})")), doctest::Contains("k"));
  CHECK_THROWS_WITH(analytical_jobs_from_json(json::parse(R"({"n": 10, "k": 1})")), doctest::Contains("invalid config"));
  CHECK_THROWS_WITH(analytical_jobs_from_json(json::parse(R"({"n": 10, "kk": 3})")), doctest::Contains("kk"));
  CHECK_THROWS(analytical_jobs_from_json(json::parse(R"({"theta_grid": [0.5, 2]})")));
}

TEST_CASE("scenario prediction") {
  const auto d = synthetic::friedman1(120, 1.0, 8);
  Hyperparams hp;
  hp.n_trees = 25;
  const auto f = fit_forest(d, hp);
  const auto q = synthetic::friedman1(10, 1.0, 9);

  const auto one = predict_scenarios(f, q.view(), 1, 1);
  REQUIRE(one.size() == 10);
  for (const auto& r : one) {
    REQUIRE(r.at("scenarios").size() == 1);
    CHECK(r.at("scenarios").at(0).at("weight").get<double>() == 1.0);
  }

  const auto five = predict_scenarios(f, q.view(), 5, 1);
  for (const auto& r : five) {
    double s = 0.0, prev = 2.0;
    for (const auto& sc : r.at("scenarios")) {
      const double w = sc.at("weight").get<double>();
      CHECK(w <= prev);
      prev = w;
      s += w;
      CHECK(sc.at("y").get<double>() == f.training_response()[sc.at("train_index").get<std::size_t>()]);
    }
    CHECK(std::fabs(s - 1.0) < 1e-12);
    CHECK(r.at("pre_normalization_sum").get<double>() <= 1.0);
  }

  const auto all = predict_scenarios(f, q.view(), f.n(), 1);
  for (std::size_t i = 0; i < all.size(); ++i) {
    double m = 0.0;
    for (const auto& sc : all[i].at("scenarios")) m += sc.at("weight").get<double>() * sc.at("y").get<double>();
    CHECK(std::fabs(m - all[i].at("mean").get<double>()) < 1e-12);
    CHECK(std::fabs(all[i].at("mean").get<double>() - predict_mean(f, q.row(i))) < 1e-12);
  }

  const auto plain = predict_scenarios(f, q.view(), std::nullopt, 1);
  CHECK(!plain.at(0).contains("scenarios"));
  CHECK_THROWS(predict_scenarios(f, MatrixView{q.features(), 20, 5}, 1, 1));
}

TEST_CASE("feature alignment") {
  const std::vector<std::string> model = {"x", "color=blue", "color=red", "z"};
  const Dataset reordered({1.0, 1.0, 5.0}, {0.0}, {"z", "color=red", "x"});
  const auto x = align_features(reordered, model);
  CHECK(x == std::vector<double>{5.0, 0.0, 1.0, 1.0});

  const Dataset missing({1.0, 2.0}, {0.0}, {"x", "color=red"});
  CHECK_THROWS_WITH(align_features(missing, model), doctest::Contains("'z'"));
  const Dataset unseen({1.0, 2.0, 1.0}, {0.0}, {"x", "z", "color=green"});
  CHECK_THROWS_WITH(align_features(unseen, model), doctest::Contains("green"));
  const Dataset extra({1.0, 2.0, 3.0, 0.0}, {0.0}, {"x", "z", "w", "color=red"});
  CHECK_THROWS_WITH(align_features(extra, model), doctest::Contains("'w'"));
}

TEST_CASE("command-line round trip") {
  const auto dir = scratch("cli");
  {
    std::ofstream out(dir / "train.csv");
    out << "a,b,kind,y\n";
    for (int i = 0; i < 80; ++i) out << fmt::format("{},{},{},{}\n", i % 9, (i * 7) % 13, i % 2 ? "u" : "v", i % 9 + (i % 2));
  }
  {
    std::ofstream out(dir / "query.csv");
    out << "kind,b,a\nu,3,4\nv,1,8\n";
  }
  const std::string cli = TOPKRF_CLI_PATH;
  auto run = [&](const std::string& args) {
    return std::system((cli + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " + (dir / "stderr.txt").string()).c_str());
  };
  REQUIRE(run(fmt::format("train --data {} --target y --model {} --n-trees 20 --seed 3", (dir / "train.csv").string(),
                          (dir / "m.bin").string())) == 0);
  REQUIRE(run(fmt::format("predict --model {} --data {} -k 3 --out {}", (dir / "m.bin").string(),
                          (dir / "query.csv").string(), (dir / "pred").string())) == 0);
  const auto pred = json::parse(slurp(dir / "pred" / "predictions.json"));
  REQUIRE(pred.size() == 2);
  CHECK(pred[0].at("scenarios").size() <= 3);

  REQUIRE(run(fmt::format("score --model {} --data {} --target y --rule se", (dir / "m.bin").string(),
                          (dir / "train.csv").string())) == 0);
  CHECK(json::parse(slurp(dir / "stdout.txt")).at("rule") == "se");
  REQUIRE(run(fmt::format("export-json --model {}", (dir / "m.bin").string())) == 0);
  CHECK(json::parse(slurp(dir / "stdout.txt")).at("trees").size() == 20);

  CHECK(run(fmt::format("predict --model {} --data {}", (dir / "missing.bin").string(), (dir / "query.csv").string())) != 0);
  {
    std::ofstream out(dir / "bad.json");
    out << R"({"datasets": [], "k_list": [3], "bogus": 1})";
  }
  CHECK(run(fmt::format("run --config {}", (dir / "bad.json").string())) != 0);
  CHECK(slurp(dir / "stderr.txt").find("bogus") != std::string::npos);
  CHECK(run("run --threads zero --config x.json") != 0);
}
