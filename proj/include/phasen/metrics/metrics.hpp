#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "phasen/dsp/stft.hpp"

namespace phasen::metrics {

inline constexpr std::size_t kSsnrFrame = 512;
inline constexpr std::size_t kSsnrHop = 256;
inline constexpr double kSsnrMin = -10.0;
inline constexpr double kSsnrMax = 35.0;
inline constexpr double kSsnrSilence = 1e-10;
inline constexpr double kSdrCap = 60.0;

/// Mean over full 512-sample frames (hop 256) of per-frame SNR clamped to
/// [-10, 35] dB. Frames whose clean energy is below 1e-10 are skipped;
/// throws std::invalid_argument when none remain or lengths differ.
double ssnr(const dsp::AudioClip& clean, const dsp::AudioClip& enhanced);

/// Whole-signal 10 log10(sum s^2 / sum (s - e)^2), capped at 60 dB.
double sdr(const dsp::AudioClip& clean, const dsp::AudioClip& enhanced);

struct EvalRow {
  std::string path;
  double ssnr_db = 0.0;
  double sdr_db = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  double mean_ssnr() const;
  double mean_sdr() const;
  void add(std::string path, const dsp::AudioClip& clean, const dsp::AudioClip& enhanced);

  void write_csv(std::ostream& os) const;
  void write_table(std::ostream& os) const;
};

}  // namespace phasen::metrics
