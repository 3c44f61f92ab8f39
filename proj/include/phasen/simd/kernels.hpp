#pragma once

#include <cstddef>
#include <vector>

#include "phasen/simd/isa.hpp"

namespace phasen::simd {

/// Register-blocked GEMM tile: C[mr x nr] += Ap * Bp, where Ap is a packed
/// panel laid out [kc][mr] and Bp is laid out [kc][nr].
template <typename T>
struct MicroKernel {
  std::size_t mr = 0;
  std::size_t nr = 0;
  void (*run)(std::size_t kc, const T* a, const T* b, T* c, std::size_t ldc) = nullptr;
};

template <typename T>
struct KernelTable {
  Isa isa = Isa::kScalar;
  MicroKernel<T> gemm;
  T (*sum)(const T* x, std::size_t n) = nullptr;
  T (*dot)(const T* x, const T* y, std::size_t n) = nullptr;
  // y += a * x
  void (*axpy)(T a, const T* x, T* y, std::size_t n) = nullptr;
  // sum of (x[i] - mean)^2
  T (*sum_sq_dev)(const T* x, std::size_t n, T mean) = nullptr;
};

/// Table for the active ISA. Selected once per process.
template <typename T>
const KernelTable<T>& kernels();

/// Table for a specific ISA; throws std::invalid_argument when unavailable.
template <typename T>
const KernelTable<T>& kernels(Isa isa);

/// Every ISA usable on this machine, scalar first.
std::vector<Isa> available_isas();

}  // namespace phasen::simd
