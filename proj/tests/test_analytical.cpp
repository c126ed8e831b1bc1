#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "topkrf/analytical.hpp"
#include "topkrf/scoring.hpp"

using namespace topkrf;
using namespace topkrf::analytical;

namespace {

Config cfg(std::size_t n, std::size_t k, double ts, double t, double d1, double d2) {
  Config c;
  c.n = n;
  c.k = k;
  c.theta_star = ts;
  c.theta = t;
  c.d1 = d1;
  c.d2 = d2;
  return c;
}

Config random_config(std::mt19937_64& rng, std::size_t max_n = 60) {
  std::uniform_int_distribution<std::size_t> nd(4, max_n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> logd(-1.0, 3.0);
  Config c;
  c.n = nd(rng);
  c.k = std::uniform_int_distribution<std::size_t>(2, c.n - 2)(rng);
  c.theta_star = unit(rng);
  c.theta = unit(rng);
  c.d1 = std::pow(10.0, logd(rng));
  c.d2 = std::pow(10.0, logd(rng));
  return c;
}

// Fresh closed-form evaluation typed independently of the library.
double se_closed_reference(const Config& c) {
  const double n = static_cast<double>(c.n), k = static_cast<double>(c.k), m = n - k;
  const double t = c.theta, ts = c.theta_star;
  return 1.0 - 2.0 * (ts * t / k + (1 - ts) * (1 - t) / m) + t * t / k + (1 - t) * (1 - t) / m +
         t * t * (k - 1) / (k * (k * c.d1 + 1)) + (1 - t) * (1 - t) * (m - 1) / (m * (m * c.d2 + 1));
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(cfg(20, 5, 0.8, 0.8, 1, 1).validate());
  CHECK_NOTHROW(cfg(4, 2, 0.5, 0.5, 1, 1).validate());
  CHECK_THROWS_AS(cfg(3, 2, 0.8, 0.8, 1, 1).validate(), std::invalid_argument);
  CHECK_THROWS_AS(cfg(20, 1, 0.8, 0.8, 1, 1).validate(), std::invalid_argument);
  CHECK_THROWS_AS(cfg(20, 19, 0.8, 0.8, 1, 1).validate(), std::invalid_argument);
  CHECK_THROWS_AS(cfg(20, 5, 1.2, 0.8, 1, 1).validate(), std::invalid_argument);
  CHECK_THROWS_AS(cfg(20, 5, 0.8, -0.1, 1, 1).validate(), std::invalid_argument);
  CHECK_THROWS_AS(cfg(20, 5, 0.8, 0.8, 0, 1).validate(), std::invalid_argument);
  CHECK_THROWS_AS(cfg(20, 5, 0.8, 0.8, 1, -2).validate(), std::invalid_argument);
}

TEST_CASE("true weights") {
  const auto w = true_weights(cfg(10, 2, 0.8, 0.5, 1, 1));
  REQUIRE(w.size() == 10);
  CHECK(w[0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(w[1] == doctest::Approx(0.4).epsilon(1e-15));
  for (std::size_t i = 2; i < 10; ++i) CHECK(w[i] == doctest::Approx(0.025).epsilon(1e-15));

  const auto u = true_weights(cfg(20, 4, 0.2, 0.5, 1, 1));
  for (double v : u) CHECK(v == doctest::Approx(0.05).epsilon(1e-15));

  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto c = random_config(rng, 500);
    const auto t = true_weights(c);
    double s = 0.0;
    for (double v : t) s += v;
    // summation of n rounded terms: a few ulps per term at most
    CHECK(std::fabs(s - 1.0) <= 4e-16 * static_cast<double>(c.n));
  }
}

TEST_CASE("log-gamma sampler moments") {
  Engine rng = make_engine(3, StreamPurpose::dirichlet);
  for (double shape : {0.05, 0.3, 1.0, 2.5, 40.0}) {
    const int draws = 200000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < draws; ++i) {
      const double g = std::exp(sample_log_gamma(shape, rng));
      s += g;
      s2 += g * g;
    }
    const double mean = s / draws;
    const double var = s2 / draws - mean * mean;
    INFO("shape " << shape);
    // Gamma(shape, 1): mean = var = shape
    CHECK(std::fabs(mean - shape) < 4.0 * std::sqrt(shape / draws));
    CHECK(var == doctest::Approx(shape).epsilon(0.05));
  }
  CHECK(std::isfinite(sample_log_gamma(1e-6, rng)));
}

TEST_CASE("estimated weights sum to one and are reproducible") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    auto c = random_config(rng);
    if (i % 10 == 0) c.d2 = 0.01;
    if (i % 10 == 1) c.d1 = 1e-5;
    const auto w = sample_estimated_weights(c, static_cast<std::uint64_t>(i));
    double s = 0.0;
    for (double v : w) {
      CHECK(v >= 0.0);
      CHECK(std::isfinite(v));
      s += v;
    }
    CHECK(std::fabs(s - 1.0) < 1e-12);
    CHECK(sample_estimated_weights(c, static_cast<std::uint64_t>(i)) == w);
  }
}

TEST_CASE("estimated weights have the stated block means") {
  const auto c = cfg(12, 4, 0.7, 0.6, 2.0, 0.5);
  Engine rng = make_engine(5, StreamPurpose::dirichlet);
  const int draws = 100000;
  std::vector<double> s(c.n, 0.0), s2(c.n, 0.0);
  for (int d = 0; d < draws; ++d) {
    const auto w = sample_estimated_weights(c, rng);
    for (std::size_t i = 0; i < c.n; ++i) {
      s[i] += w[i];
      s2[i] += w[i] * w[i];
    }
  }
  for (std::size_t i = 0; i < c.n; ++i) {
    const double mean = s[i] / draws;
    const double se = std::sqrt((s2[i] / draws - mean * mean) / draws);
    const double expect = i < c.k ? c.theta / c.k : (1 - c.theta) / (c.n - c.k);
    CHECK(std::fabs(mean - expect) < 3.0 * se);
  }
}

TEST_CASE("Dirichlet component variance") {
  const std::size_t k = 5;
  const double d1 = 1.0;
  Engine rng = make_engine(6, StreamPurpose::dirichlet);
  const int draws = 1000000;
  double s = 0.0, s2 = 0.0;
  for (int d = 0; d < draws; ++d) {
    const auto z = sample_dirichlet(k, d1, rng);
    s += z[0];
    s2 += z[0] * z[0];
  }
  const double mean = s / draws;
  const double var = s2 / draws - mean * mean;
  CHECK(mean == doctest::Approx(1.0 / k).epsilon(0.01));
  CHECK(var == doctest::Approx((k - 1.0) / (k * k * (k * d1 + 1.0))).epsilon(0.05));
}

TEST_CASE("within- and across-block covariances") {
  const auto c = cfg(10, 4, 0.8, 0.7, 1.5, 0.8);
  Engine rng = make_engine(7, StreamPurpose::dirichlet);
  const int draws = 100000;
  std::vector<std::vector<double>> samples;
  samples.reserve(draws);
  for (int d = 0; d < draws; ++d) samples.push_back(sample_estimated_weights(c, rng));
  auto cov = [&](std::size_t i, std::size_t j) {
    double mi = 0, mj = 0;
    for (const auto& w : samples) {
      mi += w[i];
      mj += w[j];
    }
    mi /= draws;
    mj /= draws;
    double sp = 0, sp2 = 0;
    for (const auto& w : samples) {
      const double p = (w[i] - mi) * (w[j] - mj);
      sp += p;
      sp2 += p * p;
    }
    const double m = sp / draws;
    return std::pair{m, std::sqrt((sp2 / draws - m * m) / draws)};
  };
  const double k = static_cast<double>(c.k), nk = static_cast<double>(c.n - c.k);
  const auto [c01, e01] = cov(0, 1);
  CHECK(std::fabs(c01 - (-c.theta * c.theta / (k * k * (k * c.d1 + 1)))) < 5 * e01);
  const auto [c67, e67] = cov(6, 7);
  CHECK(std::fabs(c67 - (-(1 - c.theta) * (1 - c.theta) / (nk * nk * (nk * c.d2 + 1)))) < 5 * e67);
  const auto [c05, e05] = cov(0, 5);
  CHECK(std::fabs(c05) < 5 * e05);
}

TEST_CASE("conditional expected squared error") {
  CHECK(expected_se_given(std::vector<double>{0, 1}, std::vector<double>{1, 0}, std::vector<double>{0, 2}) == 4.0);
  CHECK(expected_se_given(std::vector<double>{0.3, 0.7}, std::vector<double>{0.6, 0.4}, std::vector<double>{2, 2}) == 0.0);
  CHECK_THROWS_AS(expected_se_given(std::vector<double>{1}, std::vector<double>{0.5, 0.5}, std::vector<double>{1, 2}),
                  std::invalid_argument);

  std::mt19937_64 rng(8);
  const std::size_t n = 8;
  const auto omega = oracle::std_dirichlet(n, 1.0, rng);
  const auto star = oracle::std_dirichlet(n, 1.0, rng);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> u(n);
  for (auto& v : u) v = nd(rng);
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m += omega[i] * u[i];
  const int draws = 1000000;
  double s = 0.0;
  for (int d = 0; d < draws; ++d) {
    const double y = u[oracle::sample_index(star, rng)];
    s += (y - m) * (y - m);
  }
  CHECK(expected_se_given(omega, star, u) == doctest::Approx(s / draws).epsilon(0.01));
}

TEST_CASE("conditional expected crps") {
  CHECK(expected_crps_given(std::vector<double>{0.5, 0.5}, std::vector<double>{1, 0}, std::vector<double>{0, 1}) ==
        doctest::Approx(0.25).epsilon(1e-15));
  CHECK(expected_crps_given(std::vector<double>{0.2, 0.8}, std::vector<double>{0.6, 0.4}, std::vector<double>{3, 3}) ==
        0.0);

  std::mt19937_64 rng(9);
  const std::size_t n = 8;
  const auto omega = oracle::std_dirichlet(n, 1.0, rng);
  const auto star = oracle::std_dirichlet(n, 1.0, rng);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> u(n);
  for (auto& v : u) v = nd(rng);
  const auto dist =
      ForecastDistribution::from_dense(std::make_shared<const std::vector<double>>(u), omega);
  // The crps of this forecast only depends on which atom is drawn.
  std::vector<double> per_atom(n);
  for (std::size_t i = 0; i < n; ++i) per_atom[i] = crps_wecdf(dist, u[i]);
  const int draws = 1000000;
  double s = 0.0;
  for (int d = 0; d < draws; ++d) s += per_atom[oracle::sample_index(star, rng)];
  CHECK(expected_crps_given(omega, star, u) == doctest::Approx(s / draws).epsilon(0.01));
}

TEST_CASE("closed-form expected squared error") {
  CHECK(expected_se_closed(cfg(100, 5, 0.8, 0.8, 1e12, 1e12)) == doctest::Approx(0.8715789).epsilon(1e-6));
  CHECK(expected_se_closed(cfg(100, 5, 0.8, 1.0, 1000, 1000)) == doctest::Approx(0.8801600).epsilon(1e-6));
  // d -> infinity limit
  CHECK(std::fabs(expected_se_closed(cfg(100, 5, 0.8, 0.8, 1e12, 1e12)) - (1 - 0.64 / 5 - 0.04 / 95)) < 1e-10);

  std::mt19937_64 rng(10);
  for (int i = 0; i < 100; ++i) {
    const auto c = random_config(rng);
    CHECK(expected_se_closed(c) == doctest::Approx(se_closed_reference(c)).epsilon(1e-13));
    // relabel the blocks
    const auto r = cfg(c.n, c.n - c.k, 1 - c.theta_star, 1 - c.theta, c.d2, c.d1);
    CHECK(std::fabs(expected_se_closed(c) - expected_se_closed(r)) < 1e-13);
  }
}

TEST_CASE("closed form matches Monte Carlo in the large-precision limit") {
  const auto c = cfg(100, 5, 0.8, 0.8, 1e12, 1e12);
  const auto mc = mc_expected_scores(c, 100000, 1);
  CHECK(mc.se_mean == doctest::Approx(expected_se_closed(c)).epsilon(0.02));
}

TEST_CASE("both crps closed forms agree and carry the sqrt(pi) factor") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 300; ++i) {
    const auto c = random_config(rng, 400);
    const double a = expected_crps_via_se(c);
    const double b = expected_crps_blockwise(c);
    CHECK(std::fabs(a - b) < 1e-12);
    CHECK(std::fabs(expected_crps_closed(c) * std::sqrt(std::numbers::pi) - expected_se_closed(c)) < 1e-12);
  }
}

TEST_CASE("folded normal constant") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd(0.0, 1.0);
  const int draws = 1000000;
  double s = 0.0;
  for (int i = 0; i < draws; ++i) s += std::fabs(nd(rng) - nd(rng));
  CHECK(s / draws == doctest::Approx(2.0 / std::sqrt(std::numbers::pi)).epsilon(0.005));
}

TEST_CASE("Monte Carlo estimates") {
  const auto base = cfg(20, 5, 0.8, 0.8, 1, 1);
  const auto mc = mc_expected_scores(base, 100000, 3);
  CHECK(mc.draws == 100000);
  CHECK(mc.crps_mean == doctest::Approx(expected_crps_closed(base)).epsilon(0.02));
  CHECK(std::fabs(mc.se_mean - expected_se_closed(base)) < 3 * mc.se_stderr);
  CHECK(std::fabs(mc.crps_mean - expected_crps_closed(base)) < 3 * mc.crps_stderr);

  const double sp = std::sqrt(std::numbers::pi);
  const double combined = std::hypot(mc.crps_stderr * sp, mc.se_stderr);
  CHECK(std::fabs(mc.crps_mean * sp - mc.se_mean) < 3 * combined);

  const auto half = mc_expected_scores(base, 50000, 4);
  const double ratio = half.se_stderr / mc.se_stderr;
  CHECK(ratio > 1.2);
  CHECK(ratio < 1.7);

  const auto again = mc_expected_scores(base, 20000, 9, 1);
  const auto threaded = mc_expected_scores(base, 20000, 9, 3);
  CHECK(again.se_mean == threaded.se_mean);
  CHECK(again.crps_mean == threaded.crps_mean);
  CHECK(again.crps_stderr == threaded.crps_stderr);
  CHECK(mc_expected_scores(base, 20000, 9).se_mean == again.se_mean);
  CHECK_THROWS_AS(mc_expected_scores(base, 999, 1), std::invalid_argument);
}

TEST_CASE("closed form matches Monte Carlo for random configurations") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 20; ++i) {
    const auto c = random_config(rng, 30);
    const auto mc = mc_expected_scores(c, 10000, static_cast<std::uint64_t>(100 + i));
    INFO("n=" << c.n << " k=" << c.k << " theta*=" << c.theta_star << " theta=" << c.theta << " d1=" << c.d1
              << " d2=" << c.d2);
    CHECK(std::fabs(mc.se_mean - expected_se_closed(c)) < 3 * mc.se_stderr);
    CHECK(std::fabs(mc.crps_mean - expected_crps_closed(c)) < 3 * mc.crps_stderr);
  }
}

TEST_CASE("more precise weights always lower the expected score") {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> inner(0.01, 0.99);
  for (int i = 0; i < 100; ++i) {
    auto c = random_config(rng);
    c.theta = inner(rng);
    const double base = expected_se_closed(c);
    auto up1 = c;
    up1.d1 *= 2.0;
    auto up2 = c;
    up2.d2 *= 2.0;
    CHECK(expected_se_closed(up1) < base);
    CHECK(expected_se_closed(up2) < base);
  }
}

TEST_CASE("theta sweeps") {
  const auto grid = make_grid(0.0, 1.0, 0.01);
  REQUIRE(grid.size() == 101);
  CHECK(grid[37] == 0.37);
  CHECK(grid.back() == 1.0);
  CHECK_THROWS_AS(make_grid(0.0, 1.0, 0.0), std::invalid_argument);

  auto left = cfg(100, 5, 0.8, 0.8, 1000, 1000);
  const auto sl = theta_sweep(left, grid);
  REQUIRE(sl.rows.size() == 101);
  for (std::size_t i = 1; i < sl.rows.size(); ++i) CHECK(sl.rows[i].theta > sl.rows[i - 1].theta);
  CHECK(sl.rows[80].expected_crps < sl.crps_at_one);
  REQUIRE(sl.worse_than_one_boundary.has_value());
  CHECK(std::fabs(*sl.worse_than_one_boundary - 0.6) <= 0.02);
  CHECK(sl.argmin_theta == doctest::Approx(0.8));
  for (const auto& row : sl.rows) {
    if (row.theta <= 0.58) CHECK(row.expected_crps > sl.crps_at_one);
  }

  auto right = left;
  right.d2 = 0.01;
  const auto sr = theta_sweep(right, grid);
  CHECK(sr.crps_at_one < sr.rows[80].expected_crps);

  auto sharp = cfg(100, 5, 0.8, 0.5, 1e8, 1e8);
  const auto fine = theta_sweep(sharp, make_grid(0.0, 1.0, 0.001));
  CHECK(std::fabs(fine.argmin_theta - 0.8) <= 0.001 + 1e-12);

  // unsorted, duplicated input grids come back sorted and unique
  const auto messy = theta_sweep(left, {0.9, 0.1, 0.5, 0.1});
  REQUIRE(messy.rows.size() == 3);
  CHECK(messy.rows[0].theta == 0.1);
  CHECK(messy.rows[2].theta == 0.9);
  CHECK_THROWS_AS(theta_sweep(left, {}), std::invalid_argument);
  CHECK_THROWS_AS(theta_sweep(left, {0.5, 1.5}), std::invalid_argument);
}

TEST_CASE("weight-draw dump") {
  const auto rows = weight_draw_dump(cfg(20, 5, 0.8, 0.8, 1, 1), 4);
  REQUIRE(rows.size() == 20);
  double s = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].index == i);
    CHECK(rows[i].true_weight == doctest::Approx(i < 5 ? 0.16 : 0.2 / 15).epsilon(1e-14));
    s += rows[i].estimated_weight;
  }
  CHECK(std::fabs(s - 1.0) < 1e-12);
}
