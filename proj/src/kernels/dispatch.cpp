#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "f2s/kernels.hpp"

namespace f2s::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(F2S_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  if (const char* env = std::getenv("F2S_SIMD")) {
    if (std::string(env) == "scalar") return Isa::scalar;
  }
  return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool isa_supported(Isa isa) { return isa == Isa::scalar || cpu_has_avx2(); }

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("kernel ISA not available: " + std::string(isa_name(isa)));
  }
  current().store(isa, std::memory_order_relaxed);
}

template <>
const Table<float>& active_table<float>() {
#if defined(F2S_HAVE_AVX2)
  if (active_isa() == Isa::avx2) return avx2::table_f32();
#endif
  return scalar::table_f32();
}

template <>
const Table<double>& active_table<double>() {
#if defined(F2S_HAVE_AVX2)
  if (active_isa() == Isa::avx2) return avx2::table_f64();
#endif
  return scalar::table_f64();
}

}  // namespace f2s::kernels
