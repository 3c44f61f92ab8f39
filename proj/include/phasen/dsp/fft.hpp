#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace phasen::dsp {

/// Iterative radix-2 FFT for real signals of a fixed power-of-two length.
class RealFft {
 public:
  explicit RealFft(std::size_t n);

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  /// out[k] = sum_n in[n] e^{-2 pi i k n / N}, k = 0 .. N/2.
  void forward(std::span<const double> in, std::span<std::complex<double>> out) const;

  /// Inverse of forward(); the missing half of the spectrum is taken as the
  /// Hermitian mirror, and imaginary parts of DC/Nyquist are ignored.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out) const;

 private:
  void transform(std::vector<std::complex<double>>& a, bool inverse) const;

  std::size_t n_;
  std::vector<std::size_t> bitrev_;
  std::vector<std::complex<double>> twiddle_;
};

}  // namespace phasen::dsp
