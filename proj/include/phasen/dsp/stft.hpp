#pragma once

#include <cstddef>
#include <vector>

#include "phasen/ndgrad/graph.hpp"
#include "phasen/ndgrad/tensor.hpp"

namespace phasen::dsp {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kWindowLength = 512;
inline constexpr std::size_t kHopLength = 160;
inline constexpr std::size_t kFreqBins = kWindowLength / 2 + 1;
inline constexpr std::size_t kCenterPad = kWindowLength / 2;
inline constexpr double kCompressionPower = 0.3;

struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
};

/// Throws std::invalid_argument unless the clip is non-empty and has a
/// positive sample rate.
void validate(const AudioClip& clip);

/// One-sided STFT of a single clip. data is [2, F, T]: channel 0 holds real
/// parts, channel 1 imaginary parts.
struct ComplexSpec {
  ndgrad::Tensor<double> data;
  std::size_t hop = kHopLength;
  std::size_t window = kWindowLength;

  std::size_t bins() const { return data.dim(1); }
  std::size_t frames() const { return data.dim(2); }
  double re(std::size_t f, std::size_t t) const { return data.data()[f * frames() + t]; }
  double im(std::size_t f, std::size_t t) const {
    return data.data()[(bins() + f) * frames() + t];
  }
};

/// ceil(samples / hop).
std::size_t frame_count(std::size_t samples);

/// Periodic Hann window.
std::vector<double> hann_window(std::size_t length);

/// Hann-windowed 512-point frames every 160 samples over the signal
/// reflect-padded by 256 samples on both sides. 16 kHz input only.
ComplexSpec stft(const AudioClip& clip);

/// Weighted overlap-add inverse of stft(); trims the centre padding and
/// returns exactly `length` samples.
AudioClip istft(const ComplexSpec& spec, std::size_t length);

/// |S| per bin as [1, F, T].
ndgrad::Tensor<double> spec_magnitude(const ComplexSpec& spec);

/// S / |S| per bin; bins with |S| < 1e-12 become (1, 0).
ComplexSpec unit_phase(const ComplexSpec& spec);

/// Stacks equally sized spectrograms into [B, 2, F, T].
template <typename T>
ndgrad::Tensor<T> stack_specs(const std::vector<ComplexSpec>& specs);

/// Extracts sample `index` of a [B, 2, F, T] tensor.
template <typename T>
ComplexSpec unstack_spec(const ndgrad::Tensor<T>& batch, std::size_t index);

/// amp^p elementwise; rejects negative input. The derivative at 0 is
/// evaluated at 1e-12 so silent bins keep finite gradients.
template <typename T>
ndgrad::Tensor<T> power_law_compress(ndgrad::Graph<T>& g, const ndgrad::Tensor<T>& amp,
                                     double p = kCompressionPower);

}  // namespace phasen::dsp
