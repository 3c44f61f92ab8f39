#pragma once

#include <cstddef>

#include "phasen/simd/kernels.hpp"

namespace phasen::simd {

/// A logical matrix S (depth x width) that can pack itself into the
/// panel layout consumed by the microkernels. GEMM operands are described in
/// this transposed-depth form: A is presented as depth=K, width=M and B as
/// depth=K, width=N.
template <typename T>
class PanelSource {
 public:
  virtual ~PanelSource() = default;

  /// Writes ceil(width/panel) panels, each depth x panel, zero-padded past
  /// `width`. Panel p holds columns [col0 + p*panel, ...) for rows
  /// [row0, row0 + depth).
  virtual void pack(std::size_t row0, std::size_t depth, std::size_t col0, std::size_t width,
                    std::size_t panel, T* dst) const = 0;
};

/// Element (r, c) lives at data[r * row_stride + c * col_stride].
template <typename T>
class StridedSource final : public PanelSource<T> {
 public:
  StridedSource(const T* data, std::size_t row_stride, std::size_t col_stride)
      : data_(data), row_stride_(row_stride), col_stride_(col_stride) {}

  void pack(std::size_t row0, std::size_t depth, std::size_t col0, std::size_t width,
            std::size_t panel, T* dst) const override;

 private:
  const T* data_;
  std::size_t row_stride_;
  std::size_t col_stride_;
};

/// C[M x N] (row-major, leading dimension ldc) = or += A * B.
template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const PanelSource<T>& a,
          const PanelSource<T>& b, T* c, std::size_t ldc, bool accumulate,
          const KernelTable<T>& table = kernels<T>());

/// Convenience wrapper over dense row-major operands.
/// trans_a: A is stored K x M. trans_b: B is stored N x K.
template <typename T>
void gemm_dense(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c,
                std::size_t ldc, bool accumulate, const KernelTable<T>& table = kernels<T>());

}  // namespace phasen::simd
