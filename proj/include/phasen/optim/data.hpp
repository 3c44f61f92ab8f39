#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "phasen/dsp/stft.hpp"
#include "phasen/ndgrad/random.hpp"

namespace phasen::optim {

struct ManifestEntry {
  std::filesystem::path noisy;
  std::filesystem::path clean;
};

/// Lines of `noisy<TAB>clean`; blank lines and '#' comments are skipped and
/// relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

struct ClipPair {
  std::string name;
  dsp::AudioClip noisy;
  dsp::AudioClip clean;
};

struct Dataset {
  std::vector<ClipPair> pairs;
  std::vector<std::string> warnings;
};

using ClipReader = std::function<dsp::AudioClip(const std::filesystem::path&)>;

/// Pairs that fail to read, or whose noisy and clean lengths differ, are
/// skipped with a warning. Throws std::runtime_error if nothing loads.
Dataset load_dataset(const std::vector<ManifestEntry>& manifest, const ClipReader& reader);

/// Cuts the same random window of round(seconds * rate) samples from both
/// clips. Shorter clips are zero-padded at the end and consume no
/// randomness.
std::pair<dsp::AudioClip, dsp::AudioClip> clip_segment(const dsp::AudioClip& noisy,
                                                       const dsp::AudioClip& clean,
                                                       double seconds, Rng& rng);

}  // namespace phasen::optim
