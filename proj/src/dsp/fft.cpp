#include "phasen/dsp/fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace phasen::dsp {

RealFft::RealFft(std::size_t n) : n_(n) {
  if (n < 2 || (n & (n - 1)) != 0)
    throw std::invalid_argument("fft: size must be a power of two >= 2, got " + std::to_string(n));
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;
  bitrev_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b)
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
    bitrev_[i] = r;
  }
  twiddle_.resize(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddle_[k] = {std::cos(angle), std::sin(angle)};
  }
}

void RealFft::transform(std::vector<std::complex<double>>& a, bool inverse) const {
  for (std::size_t i = 0; i < n_; ++i)
    if (i < bitrev_[i]) std::swap(a[i], a[bitrev_[i]]);
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n_ / len;
    for (std::size_t start = 0; start < n_; start += len) {
      for (std::size_t j = 0; j < half; ++j) {
        std::complex<double> w = twiddle_[j * stride];
        if (inverse) w = std::conj(w);
        const std::complex<double> u = a[start + j];
        const std::complex<double> v = a[start + j + half] * w;
        a[start + j] = u + v;
        a[start + j + half] = u - v;
      }
    }
  }
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) const {
  if (in.size() != n_ || out.size() != bins())
    throw std::invalid_argument("fft: forward buffer size mismatch");
  std::vector<std::complex<double>> a(in.begin(), in.end());
  transform(a, false);
  for (std::size_t k = 0; k < bins(); ++k) out[k] = a[k];
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) const {
  if (in.size() != bins() || out.size() != n_)
    throw std::invalid_argument("fft: inverse buffer size mismatch");
  std::vector<std::complex<double>> a(n_);
  a[0] = {in[0].real(), 0.0};
  a[n_ / 2] = {in[n_ / 2].real(), 0.0};
  for (std::size_t k = 1; k < n_ / 2; ++k) {
    a[k] = in[k];
    a[n_ - k] = std::conj(in[k]);
  }
  transform(a, true);
  const double norm = 1.0 / static_cast<double>(n_);
  for (std::size_t i = 0; i < n_; ++i) out[i] = a[i].real() * norm;
}

}  // namespace phasen::dsp
