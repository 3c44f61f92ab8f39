#include "simd/tables.hpp"

namespace phasen::simd::scalar {

namespace {

constexpr std::size_t kMr = 4;
constexpr std::size_t kNr = 4;

template <typename T>
void gemm_micro(std::size_t kc, const T* a, const T* b, T* c, std::size_t ldc) {
  T acc[kMr][kNr] = {};
  for (std::size_t p = 0; p < kc; ++p) {
    for (std::size_t i = 0; i < kMr; ++i)
      for (std::size_t j = 0; j < kNr; ++j) acc[i][j] += a[i] * b[j];
    a += kMr;
    b += kNr;
  }
  for (std::size_t i = 0; i < kMr; ++i)
    for (std::size_t j = 0; j < kNr; ++j) c[i * ldc + j] += acc[i][j];
}

template <typename T>
T sum(const T* x, std::size_t n) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

template <typename T>
T dot(const T* x, const T* y, std::size_t n) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <typename T>
void axpy(T a, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
T sum_sq_dev(const T* x, std::size_t n, T mean) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = x[i] - mean;
    s += d * d;
  }
  return s;
}

template <typename T>
KernelTable<T> make_table() {
  KernelTable<T> t;
  t.isa = Isa::kScalar;
  t.gemm = {kMr, kNr, &gemm_micro<T>};
  t.sum = &sum<T>;
  t.dot = &dot<T>;
  t.axpy = &axpy<T>;
  t.sum_sq_dev = &sum_sq_dev<T>;
  return t;
}

}  // namespace

const KernelTable<float>& table_f32() {
  static const KernelTable<float> table = make_table<float>();
  return table;
}

const KernelTable<double>& table_f64() {
  static const KernelTable<double> table = make_table<double>();
  return table;
}

}  // namespace phasen::simd::scalar
