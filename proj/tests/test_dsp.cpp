#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "phasen/dsp/fft.hpp"
#include "phasen/dsp/stft.hpp"
#include "phasen/ndgrad/graph.hpp"

using namespace phasen::dsp;
using phasen::ndgrad::Graph;
using phasen::ndgrad::Tensor;

namespace {

AudioClip noise_clip(std::size_t n, std::uint64_t seed, double amp = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  AudioClip c{std::vector<double>(n), kSampleRate};
  for (double& s : c.samples) s = u(rng);
  return c;
}

double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("fft matches a direct DFT") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  for (std::size_t n : {2u, 8u, 64u, 512u}) {
    std::vector<double> x(n);
    for (double& v : x) v = nd(rng);
    RealFft fft(n);
    std::vector<std::complex<double>> got(fft.bins());
    fft.forward(x, got);
    for (std::size_t k = 0; k < fft.bins(); ++k) {
      std::complex<double> want = 0.0;
      for (std::size_t t = 0; t < n; ++t)
        want += x[t] * std::polar(1.0, -2.0 * std::numbers::pi * double(k * t) / double(n));
      CHECK(std::abs(got[k] - want) < 1e-9 * std::sqrt(double(n)));
    }
    std::vector<double> back(n);
    fft.inverse(got, back);
    for (std::size_t t = 0; t < n; ++t) CHECK(back[t] == doctest::Approx(x[t]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(RealFft(100), std::invalid_argument);
}

TEST_CASE("frame count and F") {
  CHECK(frame_count(16000) == 100);
  CHECK(frame_count(16001) == 101);
  CHECK(frame_count(3200) == 20);
  const auto spec = stft(noise_clip(3200, 2));
  CHECK(spec.bins() == 257);
  CHECK(spec.frames() == 20);
  for (std::size_t len : {300u, 1000u, 4321u}) CHECK(stft(noise_clip(len, len)).bins() == 257);
}

TEST_CASE("hann window is periodic") {
  const auto w = hann_window(512);
  CHECK(w[0] == 0.0);
  CHECK(w[256] == doctest::Approx(1.0));
  CHECK(w[128] == doctest::Approx(0.5));
  CHECK(w[1] == doctest::Approx(w[511]));
}

TEST_CASE("bin-centred sine concentrates its energy in that bin") {
  for (std::size_t k : {5u, 40u, 128u, 200u}) {
    const double freq = double(k) * 16000.0 / 512.0;
    AudioClip c{std::vector<double>(8000), kSampleRate};
    for (std::size_t i = 0; i < c.size(); ++i)
      c.samples[i] = 0.7 * std::sin(2.0 * std::numbers::pi * freq * double(i) / 16000.0);
    const auto spec = stft(c);
    const std::size_t t = spec.frames() / 2;
    double total = 0.0, near = 0.0;
    for (std::size_t f = 0; f < spec.bins(); ++f) {
      const double e = spec.re(f, t) * spec.re(f, t) + spec.im(f, t) * spec.im(f, t);
      total += e;
      if (f == k) near += e;
    }
    INFO("k=" << k << " share=" << near / total);
    // Hann spreads a bin-centred tone over k-1, k, k+1 with amplitudes 1/2, 1, 1/2.
    CHECK(near / total == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
    double lobe = 0.0;
    for (std::size_t f = k - 1; f <= k + 1; ++f)
      lobe += spec.re(f, t) * spec.re(f, t) + spec.im(f, t) * spec.im(f, t);
    CHECK(lobe / total >= 0.99);
  }
}

TEST_CASE("zeros in, zeros out") {
  AudioClip z{std::vector<double>(4000, 0.0), kSampleRate};
  const auto spec = stft(z);
  for (double v : spec.data.data()) CHECK(v == 0.0);
  const auto back = istft(spec, 4000);
  for (double v : back.samples) CHECK(v == 0.0);
}

TEST_CASE("istft inverts stft on random one-second signals") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto x = noise_clip(16000, 100 + seed);
    const auto y = istft(stft(x), x.size());
    REQUIRE(y.size() == x.size());
    CHECK(rel_l2(y.samples, x.samples) < 1e-6);
  }
  for (std::size_t len : {257u, 511u, 1601u, 3333u}) {
    const auto x = noise_clip(len, len);
    CHECK(rel_l2(istft(stft(x), len).samples, x.samples) < 1e-6);
  }
}

TEST_CASE("istft is linear") {
  const auto s1 = stft(noise_clip(5000, 7));
  const auto s2 = stft(noise_clip(5000, 8));
  const double a = 1.7, b = -0.4;
  ComplexSpec mix{Tensor<double>(s1.data.shape())};
  for (std::size_t i = 0; i < mix.data.numel(); ++i)
    mix.data.mutable_data()[i] = a * s1.data.data()[i] + b * s2.data.data()[i];
  const auto y = istft(mix, 5000);
  const auto y1 = istft(s1, 5000);
  const auto y2 = istft(s2, 5000);
  for (std::size_t i = 0; i < 5000; ++i)
    CHECK(std::abs(y.samples[i] - (a * y1.samples[i] + b * y2.samples[i])) < 1e-8);
}

TEST_CASE("stft is scale equivariant") {
  const auto x = noise_clip(3000, 9);
  AudioClip x3 = x;
  for (double& s : x3.samples) s *= -3.0;
  const auto s = stft(x);
  const auto s3 = stft(x3);
  for (std::size_t i = 0; i < s.data.numel(); ++i)
    CHECK(s3.data.data()[i] == doctest::Approx(-3.0 * s.data.data()[i]).epsilon(1e-12));
}

TEST_CASE("Parseval: spectral frame energy equals windowed frame energy") {
  const auto x = noise_clip(4000, 10);
  const auto spec = stft(x);
  const auto w = hann_window(512);
  const long n = static_cast<long>(x.size());
  for (std::size_t t : {std::size_t{0}, std::size_t{3}, std::size_t{12}, spec.frames() - 1}) {
    double time_energy = 0.0;
    for (std::size_t i = 0; i < 512; ++i) {
      long idx = static_cast<long>(t * 160 + i) - 256;
      if (idx < 0) idx = -idx;
      if (idx >= n) idx = 2 * (n - 1) - idx;
      const double v = x.samples[static_cast<std::size_t>(idx)] * w[i];
      time_energy += v * v;
    }
    double spec_energy = 0.0;
    for (std::size_t f = 0; f < 257; ++f) {
      const double e = spec.re(f, t) * spec.re(f, t) + spec.im(f, t) * spec.im(f, t);
      spec_energy += (f == 0 || f == 256) ? e : 2.0 * e;
    }
    spec_energy /= 512.0;
    CHECK(std::abs(spec_energy - time_energy) < 1e-8);
  }
}

TEST_CASE("magnitude times unit phase reassembles the spectrogram") {
  const auto spec = stft(noise_clip(2000, 11));
  const auto mag = spec_magnitude(spec);
  const auto unit = unit_phase(spec);
  for (std::size_t f = 0; f < spec.bins(); ++f)
    for (std::size_t t = 0; t < spec.frames(); ++t) {
      const double m = mag.data()[f * spec.frames() + t];
      CHECK(m >= 0.0);
      CHECK(std::abs(m * unit.re(f, t) - spec.re(f, t)) < 1e-12 * (1.0 + m));
      CHECK(std::abs(m * unit.im(f, t) - spec.im(f, t)) < 1e-12 * (1.0 + m));
    }
}

TEST_CASE("stack and unstack round trip") {
  const auto a = stft(noise_clip(1000, 12));
  const auto b = stft(noise_clip(1000, 13));
  const auto batch = stack_specs<double>({a, b});
  CHECK(batch.shape() == phasen::ndgrad::Shape{2, 2, 257, a.frames()});
  const auto b2 = unstack_spec(batch, 1);
  for (std::size_t i = 0; i < b.data.numel(); ++i) CHECK(b2.data.data()[i] == b.data.data()[i]);
  CHECK_THROWS_AS(stack_specs<double>({a, stft(noise_clip(2000, 14))}), std::invalid_argument);
}

TEST_CASE("power-law compression") {
  Graph<double> g(false);
  const Tensor<double> amp({5}, {0.0, 1.0, 8.0, 0.25, 100.0});
  const auto y = power_law_compress(g, amp);
  CHECK(y.data()[0] == 0.0);
  CHECK(y.data()[1] == 1.0);
  CHECK(y.data()[2] == doctest::Approx(1.86607).epsilon(1e-5));
  std::vector<double> sorted(amp.data().begin(), amp.data().end());
  std::sort(sorted.begin(), sorted.end());
  const auto ys = power_law_compress(g, Tensor<double>({5}, sorted));
  for (std::size_t i = 1; i < 5; ++i) CHECK(ys.data()[i] > ys.data()[i - 1]);
  CHECK_THROWS_AS(power_law_compress(g, Tensor<double>({1}, std::vector<double>{-0.1})), std::invalid_argument);
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(stft(AudioClip{{}, kSampleRate}), std::invalid_argument);
  CHECK_THROWS_AS(stft(noise_clip(1000, 1) = AudioClip{std::vector<double>(1000), 8000}),
                  std::invalid_argument);
  CHECK_THROWS_AS(istft(stft(noise_clip(1000, 1)), 0), std::invalid_argument);
}
