#include "topkrf/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace topkrf::kernels {
namespace {

struct Table {
  double (*dot)(std::span<const double>, std::span<const double>);
  double (*weighted_sq_dev)(std::span<const double>, std::span<const double>, double);
  double (*pairwise_abs)(std::span<const double>, std::span<const double>, std::span<const double>);
};

Table table_for(Isa isa) {
  switch (isa) {
#if defined(TOPKRF_HAVE_AVX2)
    case Isa::avx2:
      return {&avx2::dot, &avx2::weighted_sq_dev, &avx2::pairwise_abs};
#endif
#if defined(TOPKRF_HAVE_NEON)
    case Isa::neon:
      return {&neon::dot, &neon::weighted_sq_dev, &neon::pairwise_abs};
#endif
    default:
      return {&scalar::dot, &scalar::weighted_sq_dev, &scalar::pairwise_abs};
  }
}

Isa initial_isa() {
  if (const char* env = std::getenv("TOPKRF_SIMD"); env != nullptr && std::string(env) == "scalar") {
    return Isa::scalar;
  }
  return best_isa();
}

struct State {
  Isa isa = initial_isa();
  Table table = table_for(isa);
};

State& state() {
  static State s;
  return s;
}

}  // namespace

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(TOPKRF_HAVE_AVX2)
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(TOPKRF_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa best_isa() {
  if (isa_available(Isa::avx2)) return Isa::avx2;
  if (isa_available(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

Isa active_isa() { return state().isa; }

void force_isa(Isa isa) {
  if (!isa_available(isa)) throw std::invalid_argument("SIMD variant not available: " + std::string(isa_name(isa)));
  state().isa = isa;
  state().table = table_for(isa);
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  return state().table.dot(a, b);
}

double weighted_sq_dev(std::span<const double> w, std::span<const double> u, double center) {
  if (w.size() != u.size()) throw std::invalid_argument("weighted_sq_dev: length mismatch");
  return state().table.weighted_sq_dev(w, u, center);
}

double pairwise_abs(std::span<const double> a, std::span<const double> b, std::span<const double> u) {
  if (a.size() != u.size() || b.size() != u.size()) throw std::invalid_argument("pairwise_abs: length mismatch");
  return state().table.pairwise_abs(a, b, u);
}

}  // namespace topkrf::kernels
