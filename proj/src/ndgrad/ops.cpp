#include "phasen/ndgrad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "phasen/ndgrad/branch_trace.hpp"
#include "phasen/simd/gemm.hpp"

namespace phasen::ndgrad {

namespace {

// Neumaier summation.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    carry_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

template <typename T>
void expect_rank(const char* op, const char* what, const Tensor<T>& t, std::size_t rank) {
  if (!t.defined()) shape_error(op, std::string(what) + " is undefined");
  if (t.rank() != rank)
    shape_error(op, std::string(what) + " must have rank " + std::to_string(rank) + ", got " +
                        shape_str(t.shape()));
}

template <typename T>
void expect_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    shape_error(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
void expect_channel_vector(const char* op, const char* what, const Tensor<T>& v,
                           std::size_t channels) {
  if (!v.defined() || v.rank() != 1 || v.dim(0) != channels)
    shape_error(op, std::string(what) + " must have shape [" + std::to_string(channels) +
                        "], got " + (v.defined() ? shape_str(v.shape()) : "undefined"));
}

template <typename T>
std::vector<Tensor<T>> defined_only(std::initializer_list<Tensor<T>> ts) {
  std::vector<Tensor<T>> out;
  for (const auto& t : ts)
    if (t.defined()) out.push_back(t);
  return out;
}

// Convolutions run on a scratch copy of each sample stored as
// [C][W + kw - 1][H + kh - 1]: zero padded and frequency-fastest. Output
// position (h, w) becomes column n = w * Hp + h, and the im2col row for tap
// (c, dh, dw) is then the contiguous slice starting at c*Wp*Hp + dw*Hp + dh.
// Columns with h >= H are computed and discarded.
struct PaddedGeometry {
  std::size_t h, w, kh, kw, hp, wp;

  PaddedGeometry(std::size_t height, std::size_t width, std::size_t kh_, std::size_t kw_)
      : h(height), w(width), kh(kh_), kw(kw_), hp(height + kh_ - 1), wp(width + kw_ - 1) {}

  std::size_t plane() const { return hp * wp; }
  std::size_t columns() const { return w * hp; }
  // Slack so the last channel's shifted rows stay in bounds.
  std::size_t buffer(std::size_t channels) const { return channels * plane() + hp; }
};

template <typename T>
void pad_transpose(const T* x, std::size_t channels, const PaddedGeometry& g, T* dst) {
  std::fill(dst, dst + g.buffer(channels), T(0));
  const std::size_t ph = g.kh / 2;
  const std::size_t pw = g.kw / 2;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = x + c * g.h * g.w;
    T* plane = dst + c * g.plane();
    for (std::size_t hh = 0; hh < g.h; ++hh)
      for (std::size_t ww = 0; ww < g.w; ++ww) plane[(ww + pw) * g.hp + hh + ph] = src[hh * g.w + ww];
  }
}

// Lays [C][H][W] out as [C][W][Hp] with zero rows past H (no shift).
template <typename T>
void transpose_to_columns(const T* x, std::size_t channels, const PaddedGeometry& g, T* dst) {
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = x + c * g.h * g.w;
    T* out = dst + c * g.columns();
    for (std::size_t ww = 0; ww < g.w; ++ww) {
      T* col = out + ww * g.hp;
      for (std::size_t hh = 0; hh < g.h; ++hh) col[hh] = src[hh * g.w + ww];
      std::fill(col + g.h, col + g.hp, T(0));
    }
  }
}

template <typename T>
void columns_to_output(const T* cols, std::size_t channels, const PaddedGeometry& g, T* y,
                       bool accumulate) {
  for (std::size_t c = 0; c < channels; ++c) {
    const T* src = cols + c * g.columns();
    T* out = y + c * g.h * g.w;
    for (std::size_t hh = 0; hh < g.h; ++hh)
      for (std::size_t ww = 0; ww < g.w; ++ww) {
        const T v = src[ww * g.hp + hh];
        out[hh * g.w + ww] = accumulate ? out[hh * g.w + ww] + v : v;
      }
  }
}

std::vector<std::size_t> tap_offsets(std::size_t channels, const PaddedGeometry& g) {
  std::vector<std::size_t> off;
  off.reserve(channels * g.kh * g.kw);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t dh = 0; dh < g.kh; ++dh)
      for (std::size_t dw = 0; dw < g.kw; ++dw) off.push_back(c * g.plane() + dw * g.hp + dh);
  return off;
}

// Rows k are base + offsets[k], columns contiguous.
template <typename T>
class ShiftedRows final : public simd::PanelSource<T> {
 public:
  ShiftedRows(const T* base, const std::vector<std::size_t>& offsets)
      : base_(base), offsets_(offsets) {}

  void pack(std::size_t row0, std::size_t depth, std::size_t col0, std::size_t ncols,
            std::size_t panel, T* dst) const override {
    for (std::size_t p0 = 0; p0 < ncols; p0 += panel) {
      const std::size_t cols = std::min(panel, ncols - p0);
      for (std::size_t r = 0; r < depth; ++r) {
        std::memcpy(dst, base_ + offsets_[row0 + r] + col0 + p0, cols * sizeof(T));
        std::fill(dst + cols, dst + panel, T(0));
        dst += panel;
      }
    }
  }

 private:
  const T* base_;
  const std::vector<std::size_t>& offsets_;
};

// Transpose of ShiftedRows: element (n, k) = base[offsets[k] + n].
template <typename T>
class ShiftedColumns final : public simd::PanelSource<T> {
 public:
  ShiftedColumns(const T* base, const std::vector<std::size_t>& offsets)
      : base_(base), offsets_(offsets) {}

  void pack(std::size_t row0, std::size_t depth, std::size_t col0, std::size_t ncols,
            std::size_t panel, T* dst) const override {
    for (std::size_t p0 = 0; p0 < ncols; p0 += panel) {
      const std::size_t cols = std::min(panel, ncols - p0);
      for (std::size_t j = 0; j < cols; ++j) {
        const T* src = base_ + offsets_[col0 + p0 + j] + row0;
        for (std::size_t r = 0; r < depth; ++r) dst[r * panel + j] = src[r];
      }
      for (std::size_t j = cols; j < panel; ++j)
        for (std::size_t r = 0; r < depth; ++r) dst[r * panel + j] = T(0);
      dst += depth * panel;
    }
  }

 private:
  const T* base_;
  const std::vector<std::size_t>& offsets_;
};

// out[b] (= or +=) W[Co x Ci*kh*kw] * im2col(x[b]).
template <typename T>
void conv_gemm(const T* w, const T* x, T* out, std::size_t batch, std::size_t cin,
               std::size_t cout, std::size_t h, std::size_t wd, std::size_t kh, std::size_t kw,
               bool accumulate) {
  const std::size_t hw = h * wd;
  const std::size_t depth = cin * kh * kw;
  const simd::StridedSource<T> a(w, 1, depth);
  if (kh == 1 && kw == 1) {
    for (std::size_t b = 0; b < batch; ++b)
      simd::gemm<T>(cout, hw, cin, a, simd::StridedSource<T>(x + b * cin * hw, hw, 1),
                    out + b * cout * hw, hw, accumulate);
    return;
  }
  const PaddedGeometry geo(h, wd, kh, kw);
  const std::vector<std::size_t> offsets = tap_offsets(cin, geo);
  std::vector<T> xp(geo.buffer(cin));
  std::vector<T> yp(cout * geo.columns());
  for (std::size_t b = 0; b < batch; ++b) {
    pad_transpose(x + b * cin * hw, cin, geo, xp.data());
    simd::gemm<T>(cout, geo.columns(), depth, a, ShiftedRows<T>(xp.data(), offsets), yp.data(),
                  geo.columns(), false);
    columns_to_output(yp.data(), cout, geo, out + b * cout * hw, accumulate);
  }
}

// dw[Co x Ci*kh*kw] += sum_b dy[b] * im2col(x[b])^T.
template <typename T>
void conv_weight_grad(const T* dy, const T* x, T* dw, std::size_t batch, std::size_t cin,
                      std::size_t cout, std::size_t h, std::size_t wd, std::size_t kh,
                      std::size_t kw) {
  const std::size_t hw = h * wd;
  const std::size_t depth = cin * kh * kw;
  if (kh == 1 && kw == 1) {
    for (std::size_t b = 0; b < batch; ++b)
      simd::gemm<T>(cout, depth, hw, simd::StridedSource<T>(dy + b * cout * hw, 1, hw),
                    simd::StridedSource<T>(x + b * cin * hw, 1, hw), dw, depth, true);
    return;
  }
  const PaddedGeometry geo(h, wd, kh, kw);
  const std::vector<std::size_t> offsets = tap_offsets(cin, geo);
  std::vector<T> xp(geo.buffer(cin));
  std::vector<T> dyp(cout * geo.columns());
  const std::size_t n = geo.columns();
  for (std::size_t b = 0; b < batch; ++b) {
    pad_transpose(x + b * cin * hw, cin, geo, xp.data());
    transpose_to_columns(dy + b * cout * hw, cout, geo, dyp.data());
    simd::gemm<T>(cout, depth, n, simd::StridedSource<T>(dyp.data(), 1, n),
                  ShiftedColumns<T>(xp.data(), offsets), dw, depth, true);
  }
}

}  // namespace

// ---------------------------------------------------------------- conv2d

template <typename T>
Tensor<T> conv2d(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  constexpr const char* op = "conv2d";
  expect_rank(op, "input", x, 4);
  expect_rank(op, "weight", weight, 4);
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != cin)
    shape_error(op, "weight " + shape_str(weight.shape()) + " expects " +
                        std::to_string(weight.dim(1)) + " input channels, input is " +
                        shape_str(x.shape()));
  if (kh % 2 == 0 || kw % 2 == 0)
    shape_error(op, "kernel dims must be odd for same padding, got " +
                        shape_str(weight.shape()));
  if (bias.defined()) expect_channel_vector(op, "bias", bias, cout);

  Tensor<T> out({batch, cout, h, wd});
  const std::size_t hw = h * wd;

  auto forward = [x, weight, bias, out, batch, cin, cout, h, wd, kh, kw, hw]() mutable {
    T* y = out.mutable_data().data();
    conv_gemm(weight.data().data(), x.data().data(), y, batch, cin, cout, h, wd, kh, kw, false);
    if (bias.defined()) {
      const auto bv = bias.data();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t co = 0; co < cout; ++co) {
          T* row = y + (b * cout + co) * hw;
          const T v = bv[co];
          for (std::size_t i = 0; i < hw; ++i) row[i] += v;
        }
    }
    require_finite<T>("conv2d", out.data());
  };
  forward();

  if (g.wants({&x, &weight, &bias})) {
    auto backward = [x, weight, bias, out, batch, cin, cout, h, wd, kh, kw, hw]() mutable {
      const T* dy = out.grad().data();
      const std::size_t taps = kh * kw;
      if (weight.requires_grad())
        conv_weight_grad(dy, x.data().data(), weight.mutable_grad().data(), batch, cin, cout, h,
                         wd, kh, kw);
      if (bias.defined() && bias.requires_grad()) {
        auto db = bias.mutable_grad();
        const auto& kt = simd::kernels<T>();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t co = 0; co < cout; ++co) db[co] += kt.sum(dy + (b * cout + co) * hw, hw);
      }
      if (x.requires_grad()) {
        // Input gradient is a same-padded correlation of dy with the
        // spatially flipped, channel-transposed kernel.
        const auto wv = weight.data();
        std::vector<T> flipped(cin * cout * taps);
        for (std::size_t co = 0; co < cout; ++co)
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t t = 0; t < taps; ++t)
              flipped[(ci * cout + co) * taps + (taps - 1 - t)] = wv[(co * cin + ci) * taps + t];
        conv_gemm(flipped.data(), dy, x.mutable_grad().data(), batch, cout, cin, h, wd, kh, kw,
                  true);
      }
    };
    g.record("conv2d", defined_only({x, weight, bias}), out, forward, backward);
  }
  return out;
}

// ------------------------------------------------------- global layer norm

template <typename T>
Tensor<T> global_layer_norm(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& gamma,
                            const Tensor<T>& beta, double eps) {
  constexpr const char* op = "global_layer_norm";
  expect_rank(op, "input", x, 4);
  const std::size_t batch = x.dim(0), channels = x.dim(1), hw = x.dim(2) * x.dim(3);
  expect_channel_vector(op, "gamma", gamma, channels);
  expect_channel_vector(op, "beta", beta, channels);

  struct Stats {
    std::vector<double> mean, rstd;
  };
  auto stats = std::make_shared<Stats>();
  stats->mean.resize(batch);
  stats->rstd.resize(batch);
  Tensor<T> out(x.shape());
  const std::size_t n = channels * hw;

  auto forward = [x, gamma, beta, out, stats, batch, channels, hw, n, eps]() mutable {
    const auto& kt = simd::kernels<T>();
    const T* xv = x.data().data();
    T* y = out.mutable_data().data();
    const auto gv = gamma.data();
    const auto bv = beta.data();
    for (std::size_t b = 0; b < batch; ++b) {
      const T* xb = xv + b * n;
      const double mean = static_cast<double>(kt.sum(xb, n)) / static_cast<double>(n);
      const double var =
          static_cast<double>(kt.sum_sq_dev(xb, n, static_cast<T>(mean))) / static_cast<double>(n);
      const double rstd = 1.0 / std::sqrt(var + eps);
      stats->mean[b] = mean;
      stats->rstd[b] = rstd;
      for (std::size_t c = 0; c < channels; ++c) {
        const T scale_c = static_cast<T>(gv[c] * rstd);
        const T shift_c = static_cast<T>(bv[c] - gv[c] * mean * rstd);
        const T* xr = xb + c * hw;
        T* yr = y + b * n + c * hw;
        for (std::size_t i = 0; i < hw; ++i) yr[i] = xr[i] * scale_c + shift_c;
      }
    }
    require_finite<T>("global_layer_norm", out.data());
  };
  forward();

  if (g.wants({&x, &gamma, &beta})) {
    auto backward = [x, gamma, beta, out, stats, batch, channels, hw, n]() mutable {
      const T* dy = out.grad().data();
      const T* xv = x.data().data();
      const auto gv = gamma.data();
      std::vector<double> dgamma(channels, 0.0), dbeta(channels, 0.0);
      for (std::size_t b = 0; b < batch; ++b) {
        const double mean = stats->mean[b];
        const double rstd = stats->rstd[b];
        double sum_d = 0.0, sum_dx = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const T* dyr = dy + b * n + c * hw;
          const T* xr = xv + b * n + c * hw;
          double s_dy = 0.0, s_dyx = 0.0;
          for (std::size_t i = 0; i < hw; ++i) {
            const double xhat = (static_cast<double>(xr[i]) - mean) * rstd;
            s_dy += dyr[i];
            s_dyx += dyr[i] * xhat;
          }
          dgamma[c] += s_dyx;
          dbeta[c] += s_dy;
          sum_d += s_dy * gv[c];
          sum_dx += s_dyx * gv[c];
        }
        if (x.requires_grad()) {
          T* dx = x.mutable_grad().data() + b * n;
          const double md = sum_d / static_cast<double>(n);
          const double mdx = sum_dx / static_cast<double>(n);
          for (std::size_t c = 0; c < channels; ++c) {
            const T* dyr = dy + b * n + c * hw;
            const T* xr = xv + b * n + c * hw;
            T* dxr = dx + c * hw;
            const double gc = gv[c];
            for (std::size_t i = 0; i < hw; ++i) {
              const double xhat = (static_cast<double>(xr[i]) - mean) * rstd;
              dxr[i] += static_cast<T>(rstd * (dyr[i] * gc - md - xhat * mdx));
            }
          }
        }
      }
      if (gamma.requires_grad()) {
        auto dg = gamma.mutable_grad();
        for (std::size_t c = 0; c < channels; ++c) dg[c] += static_cast<T>(dgamma[c]);
      }
      if (beta.requires_grad()) {
        auto db = beta.mutable_grad();
        for (std::size_t c = 0; c < channels; ++c) db[c] += static_cast<T>(dbeta[c]);
      }
    };
    g.record("global_layer_norm", {x, gamma, beta}, out, forward, backward);
  }
  return out;
}

// -------------------------------------------------------------- batch norm

template <typename T>
Tensor<T> batch_norm(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, BatchNormState<T>& state, bool training,
                     double eps) {
  constexpr const char* op = "batch_norm";
  if (!x.defined()) shape_error(op, "input is undefined");
  if (x.rank() != 4) shape_error(op, "input must have rank 4, got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), channels = x.dim(1), hw = x.dim(2) * x.dim(3);
  expect_channel_vector(op, "gamma", gamma, channels);
  expect_channel_vector(op, "beta", beta, channels);
  expect_channel_vector(op, "running_mean", state.running_mean, channels);
  expect_channel_vector(op, "running_var", state.running_var, channels);

  struct Stats {
    std::vector<double> mean, rstd;
  };
  auto stats = std::make_shared<Stats>();
  stats->mean.resize(channels);
  stats->rstd.resize(channels);
  Tensor<T> out(x.shape());
  const std::size_t count = batch * hw;
  Tensor<T> run_mean = state.running_mean;
  Tensor<T> run_var = state.running_var;

  auto forward = [x, gamma, beta, out, stats, run_mean, run_var, batch, channels, hw, count,
                  training, eps]() mutable {
    const auto& kt = simd::kernels<T>();
    const T* xv = x.data().data();
    T* y = out.mutable_data().data();
    for (std::size_t c = 0; c < channels; ++c) {
      double mean = 0.0, var = 0.0;
      if (training) {
        for (std::size_t b = 0; b < batch; ++b)
          mean += kt.sum(xv + (b * channels + c) * hw, hw);
        mean /= static_cast<double>(count);
        for (std::size_t b = 0; b < batch; ++b)
          var += kt.sum_sq_dev(xv + (b * channels + c) * hw, hw, static_cast<T>(mean));
        var /= static_cast<double>(count);
      } else {
        mean = run_mean.data()[c];
        var = run_var.data()[c];
      }
      stats->mean[c] = mean;
      stats->rstd[c] = 1.0 / std::sqrt(var + eps);
      const double gc = gamma.data()[c];
      const T scale_c = static_cast<T>(gc * stats->rstd[c]);
      const T shift_c = static_cast<T>(beta.data()[c] - gc * mean * stats->rstd[c]);
      for (std::size_t b = 0; b < batch; ++b) {
        const T* xr = xv + (b * channels + c) * hw;
        T* yr = y + (b * channels + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) yr[i] = xr[i] * scale_c + shift_c;
      }
    }
    require_finite<T>("batch_norm", out.data());
  };
  forward();

  if (training) {
    const double m = state.momentum;
    const double unbias = count > 1 ? static_cast<double>(count) / static_cast<double>(count - 1) : 1.0;
    auto rm = run_mean.mutable_data();
    auto rv = run_var.mutable_data();
    for (std::size_t c = 0; c < channels; ++c) {
      const double var = 1.0 / (stats->rstd[c] * stats->rstd[c]) - eps;
      rm[c] = static_cast<T>((1.0 - m) * rm[c] + m * stats->mean[c]);
      rv[c] = static_cast<T>((1.0 - m) * rv[c] + m * var * unbias);
    }
  }

  if (g.wants({&x, &gamma, &beta})) {
    auto backward = [x, gamma, beta, out, stats, batch, channels, hw, count, training]() mutable {
      const T* dy = out.grad().data();
      const T* xv = x.data().data();
      for (std::size_t c = 0; c < channels; ++c) {
        const double mean = stats->mean[c];
        const double rstd = stats->rstd[c];
        double s_dy = 0.0, s_dyx = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
          const T* dyr = dy + (b * channels + c) * hw;
          const T* xr = xv + (b * channels + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            s_dy += dyr[i];
            s_dyx += dyr[i] * ((static_cast<double>(xr[i]) - mean) * rstd);
          }
        }
        if (gamma.requires_grad()) gamma.mutable_grad()[c] += static_cast<T>(s_dyx);
        if (beta.requires_grad()) beta.mutable_grad()[c] += static_cast<T>(s_dy);
        if (!x.requires_grad()) continue;
        const double gc = gamma.data()[c];
        const double md = training ? s_dy / static_cast<double>(count) : 0.0;
        const double mdx = training ? s_dyx / static_cast<double>(count) : 0.0;
        auto dx = x.mutable_grad();
        for (std::size_t b = 0; b < batch; ++b) {
          const T* dyr = dy + (b * channels + c) * hw;
          const T* xr = xv + (b * channels + c) * hw;
          T* dxr = dx.data() + (b * channels + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) {
            const double xhat = (static_cast<double>(xr[i]) - mean) * rstd;
            dxr[i] += static_cast<T>(gc * rstd * (dyr[i] - md - xhat * mdx));
          }
        }
      }
    };
    g.record("batch_norm", {x, gamma, beta}, out, forward, backward);
  }
  return out;
}

// ------------------------------------------------------------------- prelu

template <typename T>
Tensor<T> prelu(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& slope) {
  constexpr const char* op = "prelu";
  if (!x.defined() || x.rank() < 2) shape_error(op, "input must have rank >= 2");
  const std::size_t outer = x.dim(0), channels = x.dim(1);
  const std::size_t inner = x.numel() / (outer * channels);
  expect_channel_vector(op, "slope", slope, channels);
  Tensor<T> out(x.shape());

  auto forward = [x, slope, out, outer, channels, inner]() mutable {
    const T* xv = x.data().data();
    T* y = out.mutable_data().data();
    const auto a = slope.data();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t base = (o * channels + c) * inner;
        const T ac = a[c];
        for (std::size_t i = 0; i < inner; ++i) {
          const T v = xv[base + i];
          y[base + i] = v > T(0) ? v : ac * v;
        }
      }
    trace_branches(out.numel(), [xv](std::size_t i) { return xv[i] > T(0); });
    require_finite<T>("prelu", out.data());
  };
  forward();

  if (g.wants({&x, &slope})) {
    auto backward = [x, slope, out, outer, channels, inner]() mutable {
      const T* dy = out.grad().data();
      const T* xv = x.data().data();
      const auto a = slope.data();
      T* dx = x.requires_grad() ? x.mutable_grad().data() : nullptr;
      T* da = slope.requires_grad() ? slope.mutable_grad().data() : nullptr;
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t c = 0; c < channels; ++c) {
          const std::size_t base = (o * channels + c) * inner;
          const T ac = a[c];
          double acc = 0.0;
          for (std::size_t i = 0; i < inner; ++i) {
            const T v = xv[base + i];
            if (v > T(0)) {
              if (dx) dx[base + i] += dy[base + i];
            } else {
              if (dx) dx[base + i] += ac * dy[base + i];
              acc += static_cast<double>(dy[base + i]) * v;
            }
          }
          if (da) da[c] += static_cast<T>(acc);
        }
    };
    g.record("prelu", {x, slope}, out, forward, backward);
  }
  return out;
}

// ------------------------------------------------------------- elementwise

template <typename T>
Tensor<T> tanh(Graph<T>& g, const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  auto forward = [x, out]() mutable {
    const auto xv = x.data();
    auto y = out.mutable_data();
    for (std::size_t i = 0; i < xv.size(); ++i) y[i] = std::tanh(xv[i]);
  };
  forward();
  if (g.wants({&x})) {
    auto backward = [x, out]() mutable {
      const auto dy = out.grad();
      const auto y = out.data();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < y.size(); ++i) dx[i] += dy[i] * (T(1) - y[i] * y[i]);
    };
    g.record("tanh", {x}, out, forward, backward);
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(Graph<T>& g, const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  auto forward = [x, out]() mutable {
    const auto xv = x.data();
    auto y = out.mutable_data();
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const T v = xv[i];
      if (v >= T(0)) {
        y[i] = T(1) / (T(1) + std::exp(-v));
      } else {
        const T e = std::exp(v);
        y[i] = e / (T(1) + e);
      }
    }
  };
  forward();
  if (g.wants({&x})) {
    auto backward = [x, out]() mutable {
      const auto dy = out.grad();
      const auto y = out.data();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < y.size(); ++i) dx[i] += dy[i] * y[i] * (T(1) - y[i]);
    };
    g.record("sigmoid", {x}, out, forward, backward);
  }
  return out;
}

template <typename T>
Tensor<T> add(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  expect_same_shape("add", a, b);
  Tensor<T> out(a.shape());
  auto forward = [a, b, out]() mutable {
    const auto av = a.data();
    const auto bv = b.data();
    auto y = out.mutable_data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] + bv[i];
    require_finite<T>("add", out.data());
  };
  forward();
  if (g.wants({&a, &b})) {
    auto backward = [a, b, out]() mutable {
      const auto dy = out.grad();
      if (a.requires_grad()) {
        auto da = a.mutable_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
      }
      if (b.requires_grad()) {
        auto db = b.mutable_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
      }
    };
    g.record("add", {a, b}, out, forward, backward);
  }
  return out;
}

template <typename T>
Tensor<T> mul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  expect_same_shape("mul", a, b);
  Tensor<T> out(a.shape());
  auto forward = [a, b, out]() mutable {
    const auto av = a.data();
    const auto bv = b.data();
    auto y = out.mutable_data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
    require_finite<T>("mul", out.data());
  };
  forward();
  if (g.wants({&a, &b})) {
    auto backward = [a, b, out]() mutable {
      const auto dy = out.grad();
      const auto av = a.data();
      const auto bv = b.data();
      if (a.requires_grad()) {
        auto da = a.mutable_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bv[i];
      }
      if (b.requires_grad()) {
        auto db = b.mutable_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * av[i];
      }
    };
    g.record("mul", {a, b}, out, forward, backward);
  }
  return out;
}

template <typename T>
Tensor<T> scale(Graph<T>& g, const Tensor<T>& x, T factor) {
  Tensor<T> out(x.shape());
  auto forward = [x, out, factor]() mutable {
    const auto xv = x.data();
    auto y = out.mutable_data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = factor * xv[i];
    require_finite<T>("scale", out.data());
  };
  forward();
  if (g.wants({&x})) {
    auto backward = [x, out, factor]() mutable {
      const auto dy = out.grad();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += factor * dy[i];
    };
    g.record("scale", {x}, out, forward, backward);
  }
  return out;
}

template <typename T>
Tensor<T> mul_channels(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& w) {
  constexpr const char* op = "mul_channels";
  expect_rank(op, "input", x, 4);
  expect_rank(op, "weights", w, 4);
  if (w.dim(0) != x.dim(0) || w.dim(1) != 1 || w.dim(2) != x.dim(2) || w.dim(3) != x.dim(3))
    shape_error(op, "weights " + shape_str(w.shape()) + " do not broadcast over " +
                        shape_str(x.shape()));
  const std::size_t batch = x.dim(0), channels = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out(x.shape());
  auto forward = [x, w, out, batch, channels, hw]() mutable {
    const T* xv = x.data().data();
    const T* wv = w.data().data();
    T* y = out.mutable_data().data();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t base = (b * channels + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) y[base + i] = xv[base + i] * wv[b * hw + i];
      }
    require_finite<T>("mul_channels", out.data());
  };
  forward();
  if (g.wants({&x, &w})) {
    auto backward = [x, w, out, batch, channels, hw]() mutable {
      const T* dy = out.grad().data();
      const T* xv = x.data().data();
      const T* wv = w.data().data();
      if (x.requires_grad()) {
        T* dx = x.mutable_grad().data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (b * channels + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) dx[base + i] += dy[base + i] * wv[b * hw + i];
          }
      }
      if (w.requires_grad()) {
        T* dw = w.mutable_grad().data();
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (b * channels + c) * hw;
            for (std::size_t i = 0; i < hw; ++i) dw[b * hw + i] += dy[base + i] * xv[base + i];
          }
      }
    };
    g.record("mul_channels", {x, w}, out, forward, backward);
  }
  return out;
}

template <typename T>
Tensor<T> swap_channel_height(Graph<T>& g, const Tensor<T>& x) {
  expect_rank("swap_channel_height", "input", x, 4);
  const std::size_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> out({batch, h, c, w});
  auto forward = [x, out, batch, c, h, w]() mutable {
    const T* xv = x.data().data();
    T* y = out.mutable_data().data();
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t hi = 0; hi < h; ++hi)
          std::copy_n(xv + ((b * c + ci) * h + hi) * w, w, y + ((b * h + hi) * c + ci) * w);
  };
  forward();
  if (g.wants({&x})) {
    auto backward = [x, out, batch, c, h, w]() mutable {
      const T* dy = out.grad().data();
      T* dx = x.mutable_grad().data();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t ci = 0; ci < c; ++ci)
          for (std::size_t hi = 0; hi < h; ++hi) {
            const T* src = dy + ((b * h + hi) * c + ci) * w;
            T* dst = dx + ((b * c + ci) * h + hi) * w;
            for (std::size_t i = 0; i < w; ++i) dst[i] += src[i];
          }
    };
    g.record("swap_channel_height", {x}, out, forward, backward);
  }
  return out;
}

template <typename T>
Tensor<T> reshape(Graph<T>& g, const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    shape_error("reshape", "cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  Tensor<T> out(std::move(shape));
  auto forward = [x, out]() mutable { std::ranges::copy(x.data(), out.mutable_data().begin()); };
  forward();
  if (g.wants({&x})) {
    auto backward = [x, out]() mutable {
      const auto dy = out.grad();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    };
    g.record("reshape", {x}, out, forward, backward);
  }
  return out;
}

// --------------------------------------------------------- complex helpers

template <typename T>
Tensor<T> magnitude(Graph<T>& g, const Tensor<T>& x) {
  expect_rank("magnitude", "input", x, 4);
  if (x.dim(1) != 2)
    shape_error("magnitude", "expects 2 channels (re, im), got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), hw = x.dim(2) * x.dim(3);
  Tensor<T> out({batch, 1, x.dim(2), x.dim(3)});
  auto forward = [x, out, batch, hw]() mutable {
    const T* xv = x.data().data();
    T* y = out.mutable_data().data();
    for (std::size_t b = 0; b < batch; ++b) {
      const T* re = xv + b * 2 * hw;
      const T* im = re + hw;
      for (std::size_t i = 0; i < hw; ++i) y[b * hw + i] = std::hypot(re[i], im[i]);
    }
    trace_branches(out.numel(), [y](std::size_t i) { return y[i] < T(kUnitGuard); });
  };
  forward();
  if (g.wants({&x})) {
    auto backward = [x, out, batch, hw]() mutable {
      const T* dy = out.grad().data();
      const T* y = out.data().data();
      const T* xv = x.data().data();
      T* dx = x.mutable_grad().data();
      for (std::size_t b = 0; b < batch; ++b) {
        const T* re = xv + b * 2 * hw;
        const T* im = re + hw;
        T* dre = dx + b * 2 * hw;
        T* dim = dre + hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const T m = y[b * hw + i];
          const T d = dy[b * hw + i];
          if (m < T(kUnitGuard)) {
            dre[i] += d;
          } else {
            dre[i] += d * re[i] / m;
            dim[i] += d * im[i] / m;
          }
        }
      }
    };
    g.record("magnitude", {x}, out, forward, backward);
  }
  return out;
}

template <typename T>
Tensor<T> unit_normalize(Graph<T>& g, const Tensor<T>& x) {
  expect_rank("unit_normalize", "input", x, 4);
  if (x.dim(1) != 2)
    shape_error("unit_normalize", "expects 2 channels, got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), hw = x.dim(2) * x.dim(3);
  Tensor<T> out(x.shape());
  auto forward = [x, out, batch, hw]() mutable {
    const T* xv = x.data().data();
    T* y = out.mutable_data().data();
    for (std::size_t b = 0; b < batch; ++b) {
      const T* re = xv + b * 2 * hw;
      const T* im = re + hw;
      T* ure = y + b * 2 * hw;
      T* uim = ure + hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T m = std::hypot(re[i], im[i]);
        if (m < T(kUnitGuard)) {
          ure[i] = T(1);
          uim[i] = T(0);
        } else {
          ure[i] = re[i] / m;
          uim[i] = im[i] / m;
        }
      }
    }
    trace_branches(batch * hw, [y, hw](std::size_t i) {
      const std::size_t b = i / hw, k = i % hw;
      return y[b * 2 * hw + k] == T(1) && y[b * 2 * hw + hw + k] == T(0);
    });
  };
  forward();
  if (g.wants({&x})) {
    auto backward = [x, out, batch, hw]() mutable {
      const T* dy = out.grad().data();
      const T* xv = x.data().data();
      const T* u = out.data().data();
      T* dx = x.mutable_grad().data();
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t o = b * 2 * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const T m = std::hypot(xv[o + i], xv[o + hw + i]);
          if (m < T(kUnitGuard)) continue;
          const T ur = u[o + i], ui = u[o + hw + i];
          const T gr = dy[o + i], gi = dy[o + hw + i];
          const T proj = ur * gr + ui * gi;
          dx[o + i] += (gr - ur * proj) / m;
          dx[o + hw + i] += (gi - ui * proj) / m;
        }
      }
    };
    g.record("unit_normalize", {x}, out, forward, backward);
  }
  return out;
}

template <typename T>
Tensor<T> power_law(Graph<T>& g, const Tensor<T>& x, double p) {
  for (std::size_t i = 0; i < x.numel(); ++i)
    if (x.data()[i] < T(0))
      throw std::invalid_argument("power_law: negative input " + std::to_string(x.data()[i]) +
                                  " at flat index " + std::to_string(i));
  Tensor<T> out(x.shape());
  auto forward = [x, out, p]() mutable {
    const auto xv = x.data();
    auto y = out.mutable_data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > T(0) ? std::pow(xv[i], T(p)) : T(0);
    trace_branches(y.size(), [&xv](std::size_t i) { return xv[i] < T(kPowerLawFloor); });
    require_finite<T>("power_law", out.data());
  };
  forward();
  if (g.wants({&x})) {
    auto backward = [x, out, p]() mutable {
      const auto dy = out.grad();
      const auto xv = x.data();
      auto dx = x.mutable_grad();
      for (std::size_t i = 0; i < dy.size(); ++i) {
        const T base = std::max(xv[i], T(kPowerLawFloor));
        dx[i] += dy[i] * T(p) * std::pow(base, T(p - 1.0));
      }
    };
    g.record("power_law", {x}, out, forward, backward);
  }
  return out;
}

// -------------------------------------------------------------- reductions

template <typename T>
Tensor<T> mse(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  expect_same_shape("mse", a, b);
  Tensor<T> out({1});
  auto forward = [a, b, out]() mutable {
    const auto av = a.data();
    const auto bv = b.data();
    CompensatedSum acc;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
      acc.add(d * d);
    }
    out.mutable_data()[0] = static_cast<T>(acc.value() / static_cast<double>(av.size()));
    require_finite<T>("mse", out.data());
  };
  forward();
  if (g.wants({&a, &b})) {
    auto backward = [a, b, out]() mutable {
      const T dy = out.grad()[0];
      const auto av = a.data();
      const auto bv = b.data();
      const T s = T(2) * dy / static_cast<T>(av.size());
      if (a.requires_grad()) {
        auto da = a.mutable_grad();
        for (std::size_t i = 0; i < av.size(); ++i) da[i] += s * (av[i] - bv[i]);
      }
      if (b.requires_grad()) {
        auto db = b.mutable_grad();
        for (std::size_t i = 0; i < av.size(); ++i) db[i] -= s * (av[i] - bv[i]);
      }
    };
    g.record("mse", {a, b}, out, forward, backward);
  }
  return out;
}

template <typename T>
Tensor<T> sum(Graph<T>& g, const Tensor<T>& x) {
  Tensor<T> out({1});
  auto forward = [x, out]() mutable {
    CompensatedSum acc;
    for (T v : x.data()) acc.add(static_cast<double>(v));
    out.mutable_data()[0] = static_cast<T>(acc.value());
    require_finite<T>("sum", out.data());
  };
  forward();
  if (g.wants({&x})) {
    auto backward = [x, out]() mutable {
      const T dy = out.grad()[0];
      for (T& d : x.mutable_grad()) d += dy;
    };
    g.record("sum", {x}, out, forward, backward);
  }
  return out;
}

#define PHASEN_INSTANTIATE_OPS(T)                                                             \
  template Tensor<T> conv2d(Graph<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> global_layer_norm(Graph<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                       const Tensor<T>&, double);                             \
  template Tensor<T> batch_norm(Graph<T>&, const Tensor<T>&, const Tensor<T>&,                \
                                const Tensor<T>&, BatchNormState<T>&, bool, double);          \
  template Tensor<T> prelu(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> tanh(Graph<T>&, const Tensor<T>&);                                       \
  template Tensor<T> sigmoid(Graph<T>&, const Tensor<T>&);                                    \
  template Tensor<T> add(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> mul(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> scale(Graph<T>&, const Tensor<T>&, T);                                   \
  template Tensor<T> mul_channels(Graph<T>&, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> swap_channel_height(Graph<T>&, const Tensor<T>&);                        \
  template Tensor<T> reshape(Graph<T>&, const Tensor<T>&, Shape);                             \
  template Tensor<T> magnitude(Graph<T>&, const Tensor<T>&);                                  \
  template Tensor<T> unit_normalize(Graph<T>&, const Tensor<T>&);                             \
  template Tensor<T> power_law(Graph<T>&, const Tensor<T>&, double);                          \
  template Tensor<T> mse(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> sum(Graph<T>&, const Tensor<T>&);

PHASEN_INSTANTIATE_OPS(float)
PHASEN_INSTANTIATE_OPS(double)

}  // namespace phasen::ndgrad
