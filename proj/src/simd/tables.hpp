#pragma once

#include "phasen/simd/kernels.hpp"

// Per-ISA kernel tables. Each lives in its own translation unit compiled with
// the matching target flags; nothing else in those units may be shared.
namespace phasen::simd {

namespace scalar {
const KernelTable<float>& table_f32();
const KernelTable<double>& table_f64();
}  // namespace scalar

namespace avx2 {
const KernelTable<float>& table_f32();
const KernelTable<double>& table_f64();
}  // namespace avx2

namespace avx512 {
const KernelTable<float>& table_f32();
const KernelTable<double>& table_f64();
}  // namespace avx512

}  // namespace phasen::simd
