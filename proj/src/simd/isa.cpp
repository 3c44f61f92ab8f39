#include "phasen/simd/isa.hpp"

#include <cstdlib>
#include <string>

namespace phasen::simd {

namespace {

Isa probe() {
#if defined(PHASEN_HAVE_X86_SIMD) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512dq") &&
      __builtin_cpu_supports("fma"))
    return Isa::kAvx512;
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::kAvx2;
#endif
  return Isa::kScalar;
}

}  // namespace

Isa detected_isa() {
  static const Isa isa = probe();
  return isa;
}

bool isa_available(Isa isa) { return static_cast<int>(isa) <= static_cast<int>(detected_isa()); }

Isa active_isa() {
  static const Isa isa = [] {
    Isa best = detected_isa();
    if (const char* env = std::getenv("PHASEN_SIMD")) {
      if (auto wanted = parse_isa(env); wanted && isa_available(*wanted)) return *wanted;
    }
    return best;
  }();
  return isa;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
    case Isa::kAvx512:
      return "avx512";
  }
  return "unknown";
}

std::optional<Isa> parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::kScalar;
  if (name == "avx2") return Isa::kAvx2;
  if (name == "avx512") return Isa::kAvx512;
  return std::nullopt;
}

}  // namespace phasen::simd
