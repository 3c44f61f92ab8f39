#include "phasen/dsp/stft.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "phasen/dsp/fft.hpp"
#include "phasen/ndgrad/ops.hpp"

namespace phasen::dsp {

using ndgrad::Tensor;

void validate(const AudioClip& clip) {
  if (clip.samples.empty()) throw std::invalid_argument("audio: clip is empty");
  if (clip.sample_rate <= 0)
    throw std::invalid_argument("audio: sample rate must be positive, got " +
                                std::to_string(clip.sample_rate));
}

std::size_t frame_count(std::size_t samples) { return (samples + kHopLength - 1) / kHopLength; }

std::vector<double> hann_window(std::size_t length) {
  std::vector<double> w(length);
  for (std::size_t i = 0; i < length; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(length));
  return w;
}

namespace {

const RealFft& fft512() {
  static const RealFft fft(kWindowLength);
  return fft;
}

const std::vector<double>& window512() {
  static const std::vector<double> w = hann_window(kWindowLength);
  return w;
}

}  // namespace

ComplexSpec stft(const AudioClip& clip) {
  validate(clip);
  if (clip.sample_rate != kSampleRate)
    throw std::invalid_argument("stft: sample rate " + std::to_string(clip.sample_rate) +
                                " Hz is not supported (expected 16000, no resampling)");
  const std::size_t len = clip.samples.size();
  if (len <= kCenterPad)
    throw std::invalid_argument("stft: clip of " + std::to_string(len) +
                                " samples is too short for reflect padding (need > 256)");

  const std::size_t frames = frame_count(len);
  const long n = static_cast<long>(len);
  auto padded = [&](std::size_t i) {
    long idx = static_cast<long>(i) - static_cast<long>(kCenterPad);
    if (idx < 0) idx = -idx;
    if (idx >= n) idx = 2 * (n - 1) - idx;
    return clip.samples[static_cast<std::size_t>(idx)];
  };

  const auto& w = window512();
  std::vector<double> frame(kWindowLength);
  std::vector<std::complex<double>> bins(kFreqBins);
  Tensor<double> data({2, kFreqBins, frames});
  auto out = data.mutable_data();
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < kWindowLength; ++i) frame[i] = padded(t * kHopLength + i) * w[i];
    fft512().forward(frame, bins);
    for (std::size_t f = 0; f < kFreqBins; ++f) {
      out[f * frames + t] = bins[f].real();
      out[(kFreqBins + f) * frames + t] = bins[f].imag();
    }
  }
  return ComplexSpec{std::move(data)};
}

AudioClip istft(const ComplexSpec& spec, std::size_t length) {
  if (!spec.data.defined() || spec.data.rank() != 3 || spec.data.dim(0) != 2 ||
      spec.bins() != kFreqBins || spec.window != kWindowLength || spec.hop != kHopLength)
    throw std::invalid_argument("istft: expected a [2, 257, T] spectrogram with 512/160 framing");
  if (length == 0) throw std::invalid_argument("istft: output length must be positive");
  const std::size_t frames = spec.frames();
  const std::size_t span = (frames - 1) * kHopLength + kWindowLength;
  if (length + kCenterPad > span)
    throw std::invalid_argument("istft: " + std::to_string(frames) + " frames cannot cover " +
                                std::to_string(length) + " samples");

  const auto& w = window512();
  std::vector<double> acc(span, 0.0), wsum(span, 0.0);
  std::vector<std::complex<double>> bins(kFreqBins);
  std::vector<double> frame(kWindowLength);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t f = 0; f < kFreqBins; ++f) bins[f] = {spec.re(f, t), spec.im(f, t)};
    fft512().inverse(bins, frame);
    for (std::size_t i = 0; i < kWindowLength; ++i) {
      acc[t * kHopLength + i] += frame[i] * w[i];
      wsum[t * kHopLength + i] += w[i] * w[i];
    }
  }
  AudioClip clip;
  clip.samples.resize(length);
  for (std::size_t i = 0; i < length; ++i) {
    const double norm = wsum[i + kCenterPad];
    if (norm < 1e-10)
      throw std::runtime_error("istft: window sum vanishes at sample " + std::to_string(i));
    clip.samples[i] = acc[i + kCenterPad] / norm;
  }
  return clip;
}

Tensor<double> spec_magnitude(const ComplexSpec& spec) {
  const std::size_t f = spec.bins(), t = spec.frames();
  Tensor<double> mag({1, f, t});
  auto out = mag.mutable_data();
  const auto in = spec.data.data();
  for (std::size_t i = 0; i < f * t; ++i) out[i] = std::hypot(in[i], in[f * t + i]);
  return mag;
}

ComplexSpec unit_phase(const ComplexSpec& spec) {
  const std::size_t n = spec.bins() * spec.frames();
  Tensor<double> data(spec.data.shape());
  auto out = data.mutable_data();
  const auto in = spec.data.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double m = std::hypot(in[i], in[n + i]);
    if (m < ndgrad::kUnitGuard) {
      out[i] = 1.0;
      out[n + i] = 0.0;
    } else {
      out[i] = in[i] / m;
      out[n + i] = in[n + i] / m;
    }
  }
  return ComplexSpec{std::move(data), spec.hop, spec.window};
}

template <typename T>
Tensor<T> stack_specs(const std::vector<ComplexSpec>& specs) {
  if (specs.empty()) throw std::invalid_argument("stack_specs: no spectrograms");
  const ndgrad::Shape one = specs.front().data.shape();
  Tensor<T> out({specs.size(), one[0], one[1], one[2]});
  auto dst = out.mutable_data();
  const std::size_t n = ndgrad::shape_numel(one);
  for (std::size_t b = 0; b < specs.size(); ++b) {
    if (specs[b].data.shape() != one)
      throw std::invalid_argument("stack_specs: spectrogram " + std::to_string(b) + " has shape " +
                                  ndgrad::shape_str(specs[b].data.shape()) + ", expected " +
                                  ndgrad::shape_str(one));
    const auto src = specs[b].data.data();
    for (std::size_t i = 0; i < n; ++i) dst[b * n + i] = static_cast<T>(src[i]);
  }
  return out;
}

template <typename T>
ComplexSpec unstack_spec(const Tensor<T>& batch, std::size_t index) {
  if (batch.rank() != 4 || batch.dim(1) != 2 || index >= batch.dim(0))
    throw std::invalid_argument("unstack_spec: bad batch " + ndgrad::shape_str(batch.shape()));
  const std::size_t n = 2 * batch.dim(2) * batch.dim(3);
  std::vector<double> values(n);
  const auto src = batch.data();
  for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<double>(src[index * n + i]);
  return ComplexSpec{Tensor<double>({2, batch.dim(2), batch.dim(3)}, std::move(values))};
}

template <typename T>
Tensor<T> power_law_compress(ndgrad::Graph<T>& g, const Tensor<T>& amp, double p) {
  return ndgrad::power_law(g, amp, p);
}

template Tensor<float> stack_specs<float>(const std::vector<ComplexSpec>&);
template Tensor<double> stack_specs<double>(const std::vector<ComplexSpec>&);
template ComplexSpec unstack_spec<float>(const Tensor<float>&, std::size_t);
template ComplexSpec unstack_spec<double>(const Tensor<double>&, std::size_t);
template Tensor<float> power_law_compress<float>(ndgrad::Graph<float>&, const Tensor<float>&,
                                                 double);
template Tensor<double> power_law_compress<double>(ndgrad::Graph<double>&, const Tensor<double>&,
                                                   double);

}  // namespace phasen::dsp
