#include "phasen/simd/gemm.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

namespace phasen::simd {

template <typename T>
void StridedSource<T>::pack(std::size_t row0, std::size_t depth, std::size_t col0,
                            std::size_t width, std::size_t panel, T* dst) const {
  for (std::size_t p0 = 0; p0 < width; p0 += panel) {
    const std::size_t cols = std::min(panel, width - p0);
    for (std::size_t r = 0; r < depth; ++r) {
      const T* src = data_ + (row0 + r) * row_stride_ + (col0 + p0) * col_stride_;
      if (col_stride_ == 1) {
        std::memcpy(dst, src, cols * sizeof(T));
      } else {
        for (std::size_t j = 0; j < cols; ++j) dst[j] = src[j * col_stride_];
      }
      std::fill(dst + cols, dst + panel, T(0));
      dst += panel;
    }
  }
}

namespace {

template <typename T>
constexpr std::size_t kKc = 1024 / sizeof(T);
constexpr std::size_t kMcPanels = 16;
constexpr std::size_t kNc = 512;

std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

}  // namespace

template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const PanelSource<T>& a,
          const PanelSource<T>& b, T* c, std::size_t ldc, bool accumulate,
          const KernelTable<T>& table) {
  if (!accumulate)
    for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, T(0));
  if (m == 0 || n == 0 || k == 0) return;

  const std::size_t mr = table.gemm.mr;
  const std::size_t nr = table.gemm.nr;
  const std::size_t mc_max = mr * kMcPanels;
  const std::size_t nc_max = round_up(kNc, nr);

  thread_local std::vector<T> abuf;
  thread_local std::vector<T> bbuf;
  abuf.resize(mc_max * kKc<T>);
  bbuf.resize(nc_max * kKc<T>);
  T tile[32 * 32];

  for (std::size_t jc = 0; jc < n; jc += nc_max) {
    const std::size_t nc = std::min(nc_max, n - jc);
    for (std::size_t pc = 0; pc < k; pc += kKc<T>) {
      const std::size_t kc = std::min(kKc<T>, k - pc);
      b.pack(pc, kc, jc, nc, nr, bbuf.data());
      for (std::size_t ic = 0; ic < m; ic += mc_max) {
        const std::size_t mc = std::min(mc_max, m - ic);
        a.pack(pc, kc, ic, mc, mr, abuf.data());
        for (std::size_t jr = 0; jr < nc; jr += nr) {
          const std::size_t ncols = std::min(nr, nc - jr);
          const T* bp = bbuf.data() + (jr / nr) * kc * nr;
          for (std::size_t ir = 0; ir < mc; ir += mr) {
            const std::size_t nrows = std::min(mr, mc - ir);
            const T* ap = abuf.data() + (ir / mr) * kc * mr;
            T* cp = c + (ic + ir) * ldc + jc + jr;
            if (nrows == mr && ncols == nr) {
              table.gemm.run(kc, ap, bp, cp, ldc);
            } else {
              std::fill(tile, tile + mr * nr, T(0));
              table.gemm.run(kc, ap, bp, tile, nr);
              for (std::size_t i = 0; i < nrows; ++i)
                for (std::size_t j = 0; j < ncols; ++j) cp[i * ldc + j] += tile[i * nr + j];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void gemm_dense(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c,
                std::size_t ldc, bool accumulate, const KernelTable<T>& table) {
  const StridedSource<T> as = trans_a ? StridedSource<T>(a, lda, 1) : StridedSource<T>(a, 1, lda);
  const StridedSource<T> bs = trans_b ? StridedSource<T>(b, 1, ldb) : StridedSource<T>(b, ldb, 1);
  gemm<T>(m, n, k, as, bs, c, ldc, accumulate, table);
}

template class StridedSource<float>;
template class StridedSource<double>;
template void gemm<float>(std::size_t, std::size_t, std::size_t, const PanelSource<float>&,
                          const PanelSource<float>&, float*, std::size_t, bool,
                          const KernelTable<float>&);
template void gemm<double>(std::size_t, std::size_t, std::size_t, const PanelSource<double>&,
                           const PanelSource<double>&, double*, std::size_t, bool,
                           const KernelTable<double>&);
template void gemm_dense<float>(bool, bool, std::size_t, std::size_t, std::size_t, const float*,
                                std::size_t, const float*, std::size_t, float*, std::size_t,
                                bool, const KernelTable<float>&);
template void gemm_dense<double>(bool, bool, std::size_t, std::size_t, std::size_t,
                                 const double*, std::size_t, const double*, std::size_t,
                                 double*, std::size_t, bool, const KernelTable<double>&);

}  // namespace phasen::simd
