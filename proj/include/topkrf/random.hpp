#pragma once

#include <cstdint>
#include <random>

namespace topkrf {

using Engine = std::mt19937_64;

// Purpose tags keep independent consumers of one user seed on disjoint streams.
enum class StreamPurpose : std::uint64_t {
  tree = 1,
  shuffle = 2,
  subsample = 3,
  monte_carlo = 4,
  dirichlet = 5,
  synthetic = 6,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Seed for stream `stream` of `purpose` derived from a user seed. Streams are
/// addressed by index, so the seed of stream b never depends on how many
/// other streams were consumed or on which thread consumes it.
std::uint64_t stream_seed(std::uint64_t seed, StreamPurpose purpose, std::uint64_t stream = 0);

inline Engine make_engine(std::uint64_t seed, StreamPurpose purpose, std::uint64_t stream = 0) {
  return Engine(stream_seed(seed, purpose, stream));
}

}  // namespace topkrf
