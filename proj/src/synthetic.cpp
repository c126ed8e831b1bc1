#include "topkrf/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "topkrf/random.hpp"

namespace topkrf::synthetic {
namespace {

std::vector<std::string> names(std::size_t p) {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < p; ++j) out.push_back("x" + std::to_string(j + 1));
  return out;
}

std::vector<double> uniform_matrix(std::size_t n, std::size_t p, Engine& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> x(n * p);
  for (double& v : x) v = unif(rng);
  return x;
}

}  // namespace

Dataset friedman1(std::size_t n, double noise, std::uint64_t seed, std::size_t p) {
  if (p < 5) throw std::invalid_argument("friedman1 needs p >= 5");
  Engine rng = make_engine(seed, StreamPurpose::synthetic, 1);
  auto x = uniform_matrix(n, p, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = &x[i * p];
    y[i] = 10.0 * std::sin(std::numbers::pi * r[0] * r[1]) + 20.0 * (r[2] - 0.5) * (r[2] - 0.5) + 10.0 * r[3] +
           5.0 * r[4] + noise * normal(rng);
  }
  return Dataset(std::move(x), std::move(y), names(p));
}

Dataset pure_noise(std::size_t n, std::size_t p, std::uint64_t seed) {
  Engine rng = make_engine(seed, StreamPurpose::synthetic, 2);
  auto x = uniform_matrix(n, p, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> y(n);
  for (double& v : y) v = normal(rng);
  return Dataset(std::move(x), std::move(y), names(p));
}

Dataset linear(std::size_t n, std::size_t p, double noise, std::uint64_t seed) {
  Engine rng = make_engine(seed, StreamPurpose::synthetic, 3);
  auto x = uniform_matrix(n, p, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < p; ++j) s += static_cast<double>(j + 1) / static_cast<double>(p) * x[i * p + j];
    y[i] = s + noise * normal(rng);
  }
  return Dataset(std::move(x), std::move(y), names(p));
}

Dataset generate(const Spec& spec) {
  if (spec.kind == "friedman1") return friedman1(spec.n, spec.noise, spec.seed, spec.p);
  if (spec.kind == "noise") return pure_noise(spec.n, spec.p, spec.seed);
  if (spec.kind == "linear") return linear(spec.n, spec.p, spec.noise, spec.seed);
  throw std::invalid_argument("unknown synthetic dataset kind '" + spec.kind + "' (expected friedman1, noise or linear)");
}

}  // namespace topkrf::synthetic
