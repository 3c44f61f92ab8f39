#include "phasen/simd/kernels.hpp"

#include <stdexcept>
#include <string>
#include <type_traits>

#include "simd/tables.hpp"

namespace phasen::simd {

namespace {

template <typename T>
const KernelTable<T>& lookup(Isa isa) {
  if (!isa_available(isa))
    throw std::invalid_argument("simd: ISA '" + std::string(isa_name(isa)) +
                                "' is not available on this machine");
  switch (isa) {
#ifdef PHASEN_HAVE_X86_SIMD
    case Isa::kAvx512:
      if constexpr (std::is_same_v<T, float>) return avx512::table_f32();
      else return avx512::table_f64();
    case Isa::kAvx2:
      if constexpr (std::is_same_v<T, float>) return avx2::table_f32();
      else return avx2::table_f64();
#endif
    default:
      break;
  }
  if constexpr (std::is_same_v<T, float>) return scalar::table_f32();
  else return scalar::table_f64();
}

}  // namespace

template <typename T>
const KernelTable<T>& kernels() {
  static const KernelTable<T>& table = lookup<T>(active_isa());
  return table;
}

template <typename T>
const KernelTable<T>& kernels(Isa isa) {
  return lookup<T>(isa);
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::kScalar, Isa::kAvx2, Isa::kAvx512})
    if (isa_available(isa)) out.push_back(isa);
  return out;
}

template const KernelTable<float>& kernels<float>();
template const KernelTable<double>& kernels<double>();
template const KernelTable<float>& kernels<float>(Isa);
template const KernelTable<double>& kernels<double>(Isa);

}  // namespace phasen::simd
