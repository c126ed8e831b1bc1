#pragma once

// Dense arithmetic kernels with a scalar reference and SIMD variants.
//
// The scalar versions define the semantics. SIMD versions reassociate the
// sums (and use FMA where available), so they agree with the reference to a
// few ulps per term rather than bit-for-bit. The active variant is chosen
// once at startup from CPU features; TOPKRF_SIMD=scalar in the environment
// or force_isa() overrides the choice.

#include <span>
#include <string_view>

namespace topkrf::kernels {

enum class Isa { scalar, avx2, neon };

/// Best variant this binary was built with and this CPU supports.
Isa best_isa();
Isa active_isa();
/// Throws std::invalid_argument if `isa` is not available.
void force_isa(Isa isa);
bool isa_available(Isa isa);
std::string_view isa_name(Isa isa);

/// sum_i a_i * b_i
double dot(std::span<const double> a, std::span<const double> b);

/// sum_i w_i * (u_i - center)^2
double weighted_sq_dev(std::span<const double> w, std::span<const double> u, double center);

/// sum_i sum_j a_i * b_j * |u_i - u_j|
double pairwise_abs(std::span<const double> a, std::span<const double> b, std::span<const double> u);

namespace scalar {
double dot(std::span<const double> a, std::span<const double> b);
double weighted_sq_dev(std::span<const double> w, std::span<const double> u, double center);
double pairwise_abs(std::span<const double> a, std::span<const double> b, std::span<const double> u);
}  // namespace scalar

namespace avx2 {
double dot(std::span<const double> a, std::span<const double> b);
double weighted_sq_dev(std::span<const double> w, std::span<const double> u, double center);
double pairwise_abs(std::span<const double> a, std::span<const double> b, std::span<const double> u);
}  // namespace avx2

namespace neon {
double dot(std::span<const double> a, std::span<const double> b);
double weighted_sq_dev(std::span<const double> w, std::span<const double> u, double center);
double pairwise_abs(std::span<const double> a, std::span<const double> b, std::span<const double> u);
}  // namespace neon

}  // namespace topkrf::kernels
