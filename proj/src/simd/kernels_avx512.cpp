#include <immintrin.h>

#include "simd/tables.hpp"

namespace phasen::simd::avx512 {

namespace {

// 8 x 32 float tile: 16 zmm accumulators.
void gemm_micro_f32(std::size_t kc, const float* a, const float* b, float* c, std::size_t ldc) {
  __m512 c00 = _mm512_setzero_ps(), c01 = _mm512_setzero_ps();
  __m512 c10 = _mm512_setzero_ps(), c11 = _mm512_setzero_ps();
  __m512 c20 = _mm512_setzero_ps(), c21 = _mm512_setzero_ps();
  __m512 c30 = _mm512_setzero_ps(), c31 = _mm512_setzero_ps();
  __m512 c40 = _mm512_setzero_ps(), c41 = _mm512_setzero_ps();
  __m512 c50 = _mm512_setzero_ps(), c51 = _mm512_setzero_ps();
  __m512 c60 = _mm512_setzero_ps(), c61 = _mm512_setzero_ps();
  __m512 c70 = _mm512_setzero_ps(), c71 = _mm512_setzero_ps();
  for (std::size_t p = 0; p < kc; ++p) {
    const __m512 b0 = _mm512_loadu_ps(b);
    const __m512 b1 = _mm512_loadu_ps(b + 16);
    __m512 ai;
#define PHASEN_ROW(i)                         \
  ai = _mm512_set1_ps(a[i]);                  \
  c##i##0 = _mm512_fmadd_ps(ai, b0, c##i##0); \
  c##i##1 = _mm512_fmadd_ps(ai, b1, c##i##1);
    PHASEN_ROW(0) PHASEN_ROW(1) PHASEN_ROW(2) PHASEN_ROW(3)
    PHASEN_ROW(4) PHASEN_ROW(5) PHASEN_ROW(6) PHASEN_ROW(7)
#undef PHASEN_ROW
    a += 8;
    b += 32;
  }
#define PHASEN_STORE(i)                                                              \
  _mm512_storeu_ps(c + i * ldc, _mm512_add_ps(_mm512_loadu_ps(c + i * ldc), c##i##0)); \
  _mm512_storeu_ps(c + i * ldc + 16, _mm512_add_ps(_mm512_loadu_ps(c + i * ldc + 16), c##i##1));
  PHASEN_STORE(0) PHASEN_STORE(1) PHASEN_STORE(2) PHASEN_STORE(3)
  PHASEN_STORE(4) PHASEN_STORE(5) PHASEN_STORE(6) PHASEN_STORE(7)
#undef PHASEN_STORE
}

// 8 x 16 double tile.
void gemm_micro_f64(std::size_t kc, const double* a, const double* b, double* c, std::size_t ldc) {
  __m512d c00 = _mm512_setzero_pd(), c01 = _mm512_setzero_pd();
  __m512d c10 = _mm512_setzero_pd(), c11 = _mm512_setzero_pd();
  __m512d c20 = _mm512_setzero_pd(), c21 = _mm512_setzero_pd();
  __m512d c30 = _mm512_setzero_pd(), c31 = _mm512_setzero_pd();
  __m512d c40 = _mm512_setzero_pd(), c41 = _mm512_setzero_pd();
  __m512d c50 = _mm512_setzero_pd(), c51 = _mm512_setzero_pd();
  __m512d c60 = _mm512_setzero_pd(), c61 = _mm512_setzero_pd();
  __m512d c70 = _mm512_setzero_pd(), c71 = _mm512_setzero_pd();
  for (std::size_t p = 0; p < kc; ++p) {
    const __m512d b0 = _mm512_loadu_pd(b);
    const __m512d b1 = _mm512_loadu_pd(b + 8);
    __m512d ai;
#define PHASEN_ROW(i)                         \
  ai = _mm512_set1_pd(a[i]);                  \
  c##i##0 = _mm512_fmadd_pd(ai, b0, c##i##0); \
  c##i##1 = _mm512_fmadd_pd(ai, b1, c##i##1);
    PHASEN_ROW(0) PHASEN_ROW(1) PHASEN_ROW(2) PHASEN_ROW(3)
    PHASEN_ROW(4) PHASEN_ROW(5) PHASEN_ROW(6) PHASEN_ROW(7)
#undef PHASEN_ROW
    a += 8;
    b += 16;
  }
#define PHASEN_STORE(i)                                                              \
  _mm512_storeu_pd(c + i * ldc, _mm512_add_pd(_mm512_loadu_pd(c + i * ldc), c##i##0)); \
  _mm512_storeu_pd(c + i * ldc + 8, _mm512_add_pd(_mm512_loadu_pd(c + i * ldc + 8), c##i##1));
  PHASEN_STORE(0) PHASEN_STORE(1) PHASEN_STORE(2) PHASEN_STORE(3)
  PHASEN_STORE(4) PHASEN_STORE(5) PHASEN_STORE(6) PHASEN_STORE(7)
#undef PHASEN_STORE
}

float sum_f32(const float* x, std::size_t n) {
  __m512 s0 = _mm512_setzero_ps(), s1 = _mm512_setzero_ps();
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    s0 = _mm512_add_ps(s0, _mm512_loadu_ps(x + i));
    s1 = _mm512_add_ps(s1, _mm512_loadu_ps(x + i + 16));
  }
  if (i + 16 <= n) {
    s0 = _mm512_add_ps(s0, _mm512_loadu_ps(x + i));
    i += 16;
  }
  if (i < n) {
    const __mmask16 tail = static_cast<__mmask16>((1u << (n - i)) - 1u);
    s1 = _mm512_add_ps(s1, _mm512_maskz_loadu_ps(tail, x + i));
  }
  return _mm512_reduce_add_ps(_mm512_add_ps(s0, s1));
}

double sum_f64(const double* x, std::size_t n) {
  __m512d s0 = _mm512_setzero_pd(), s1 = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm512_add_pd(s0, _mm512_loadu_pd(x + i));
    s1 = _mm512_add_pd(s1, _mm512_loadu_pd(x + i + 8));
  }
  if (i + 8 <= n) {
    s0 = _mm512_add_pd(s0, _mm512_loadu_pd(x + i));
    i += 8;
  }
  if (i < n) {
    const __mmask8 tail = static_cast<__mmask8>((1u << (n - i)) - 1u);
    s1 = _mm512_add_pd(s1, _mm512_maskz_loadu_pd(tail, x + i));
  }
  return _mm512_reduce_add_pd(_mm512_add_pd(s0, s1));
}

float dot_f32(const float* x, const float* y, std::size_t n) {
  __m512 s0 = _mm512_setzero_ps(), s1 = _mm512_setzero_ps();
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    s0 = _mm512_fmadd_ps(_mm512_loadu_ps(x + i), _mm512_loadu_ps(y + i), s0);
    s1 = _mm512_fmadd_ps(_mm512_loadu_ps(x + i + 16), _mm512_loadu_ps(y + i + 16), s1);
  }
  for (; i + 16 <= n; i += 16)
    s0 = _mm512_fmadd_ps(_mm512_loadu_ps(x + i), _mm512_loadu_ps(y + i), s0);
  if (i < n) {
    const __mmask16 tail = static_cast<__mmask16>((1u << (n - i)) - 1u);
    s1 = _mm512_fmadd_ps(_mm512_maskz_loadu_ps(tail, x + i), _mm512_maskz_loadu_ps(tail, y + i), s1);
  }
  return _mm512_reduce_add_ps(_mm512_add_ps(s0, s1));
}

double dot_f64(const double* x, const double* y, std::size_t n) {
  __m512d s0 = _mm512_setzero_pd(), s1 = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    s0 = _mm512_fmadd_pd(_mm512_loadu_pd(x + i), _mm512_loadu_pd(y + i), s0);
    s1 = _mm512_fmadd_pd(_mm512_loadu_pd(x + i + 8), _mm512_loadu_pd(y + i + 8), s1);
  }
  for (; i + 8 <= n; i += 8)
    s0 = _mm512_fmadd_pd(_mm512_loadu_pd(x + i), _mm512_loadu_pd(y + i), s0);
  if (i < n) {
    const __mmask8 tail = static_cast<__mmask8>((1u << (n - i)) - 1u);
    s1 = _mm512_fmadd_pd(_mm512_maskz_loadu_pd(tail, x + i), _mm512_maskz_loadu_pd(tail, y + i), s1);
  }
  return _mm512_reduce_add_pd(_mm512_add_pd(s0, s1));
}

void axpy_f32(float a, const float* x, float* y, std::size_t n) {
  const __m512 va = _mm512_set1_ps(a);
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16)
    _mm512_storeu_ps(y + i, _mm512_fmadd_ps(va, _mm512_loadu_ps(x + i), _mm512_loadu_ps(y + i)));
  if (i < n) {
    const __mmask16 tail = static_cast<__mmask16>((1u << (n - i)) - 1u);
    _mm512_mask_storeu_ps(y + i, tail,
                          _mm512_fmadd_ps(va, _mm512_maskz_loadu_ps(tail, x + i),
                                          _mm512_maskz_loadu_ps(tail, y + i)));
  }
}

void axpy_f64(double a, const double* x, double* y, std::size_t n) {
  const __m512d va = _mm512_set1_pd(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm512_storeu_pd(y + i, _mm512_fmadd_pd(va, _mm512_loadu_pd(x + i), _mm512_loadu_pd(y + i)));
  if (i < n) {
    const __mmask8 tail = static_cast<__mmask8>((1u << (n - i)) - 1u);
    _mm512_mask_storeu_pd(y + i, tail,
                          _mm512_fmadd_pd(va, _mm512_maskz_loadu_pd(tail, x + i),
                                          _mm512_maskz_loadu_pd(tail, y + i)));
  }
}

float sum_sq_dev_f32(const float* x, std::size_t n, float mean) {
  const __m512 vm = _mm512_set1_ps(mean);
  __m512 s0 = _mm512_setzero_ps(), s1 = _mm512_setzero_ps();
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    const __m512 d0 = _mm512_sub_ps(_mm512_loadu_ps(x + i), vm);
    const __m512 d1 = _mm512_sub_ps(_mm512_loadu_ps(x + i + 16), vm);
    s0 = _mm512_fmadd_ps(d0, d0, s0);
    s1 = _mm512_fmadd_ps(d1, d1, s1);
  }
  for (; i + 16 <= n; i += 16) {
    const __m512 d = _mm512_sub_ps(_mm512_loadu_ps(x + i), vm);
    s0 = _mm512_fmadd_ps(d, d, s0);
  }
  if (i < n) {
    const __mmask16 tail = static_cast<__mmask16>((1u << (n - i)) - 1u);
    const __m512 d = _mm512_maskz_sub_ps(tail, _mm512_maskz_loadu_ps(tail, x + i), vm);
    s1 = _mm512_fmadd_ps(d, d, s1);
  }
  return _mm512_reduce_add_ps(_mm512_add_ps(s0, s1));
}

double sum_sq_dev_f64(const double* x, std::size_t n, double mean) {
  const __m512d vm = _mm512_set1_pd(mean);
  __m512d s0 = _mm512_setzero_pd(), s1 = _mm512_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    const __m512d d0 = _mm512_sub_pd(_mm512_loadu_pd(x + i), vm);
    const __m512d d1 = _mm512_sub_pd(_mm512_loadu_pd(x + i + 8), vm);
    s0 = _mm512_fmadd_pd(d0, d0, s0);
    s1 = _mm512_fmadd_pd(d1, d1, s1);
  }
  for (; i + 8 <= n; i += 8) {
    const __m512d d = _mm512_sub_pd(_mm512_loadu_pd(x + i), vm);
    s0 = _mm512_fmadd_pd(d, d, s0);
  }
  if (i < n) {
    const __mmask8 tail = static_cast<__mmask8>((1u << (n - i)) - 1u);
    const __m512d d = _mm512_maskz_sub_pd(tail, _mm512_maskz_loadu_pd(tail, x + i), vm);
    s1 = _mm512_fmadd_pd(d, d, s1);
  }
  return _mm512_reduce_add_pd(_mm512_add_pd(s0, s1));
}

}  // namespace

const KernelTable<float>& table_f32() {
  static const KernelTable<float> table{Isa::kAvx512, {8, 32, &gemm_micro_f32}, &sum_f32,
                                        &dot_f32, &axpy_f32, &sum_sq_dev_f32};
  return table;
}

const KernelTable<double>& table_f64() {
  static const KernelTable<double> table{Isa::kAvx512, {8, 16, &gemm_micro_f64}, &sum_f64,
                                         &dot_f64, &axpy_f64, &sum_sq_dev_f64};
  return table;
}

}  // namespace phasen::simd::avx512
