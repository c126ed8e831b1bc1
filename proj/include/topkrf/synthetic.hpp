#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "topkrf/dataset.hpp"

namespace topkrf::synthetic {

/// y = 10 sin(pi x1 x2) + 20 (x3 - 1/2)^2 + 10 x4 + 5 x5 + noise * N(0,1),
/// x ~ U(0,1)^p with p >= 5 (the extra features are irrelevant).
Dataset friedman1(std::size_t n, double noise, std::uint64_t seed, std::size_t p = 10);

/// y ~ N(0,1) independent of x ~ U(0,1)^p.
Dataset pure_noise(std::size_t n, std::size_t p, std::uint64_t seed);

/// y = sum_j (j+1)/p * x_j + noise * N(0,1), x ~ U(0,1)^p.
Dataset linear(std::size_t n, std::size_t p, double noise, std::uint64_t seed);

struct Spec {
  std::string kind = "friedman1";  // friedman1 | noise | linear
  std::size_t n = 1000;
  std::size_t p = 10;
  double noise = 1.0;
  std::uint64_t seed = 0;
};

Dataset generate(const Spec& spec);

}  // namespace topkrf::synthetic
