#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "phasen/dsp/stft.hpp"

namespace phasen::cli {

/// PCM 16-bit mono 16 kHz only; samples are scaled by 1/32768. Anything else
/// is rejected with a message naming the offending field.
dsp::AudioClip decode_wav(std::span<const std::uint8_t> bytes, const std::string& source);
dsp::AudioClip read_wav(const std::filesystem::path& path);

/// Canonical 44-byte header; samples are rounded and clamped to int16.
std::vector<std::uint8_t> encode_wav(const dsp::AudioClip& clip);
void write_wav(const std::filesystem::path& path, const dsp::AudioClip& clip);

}  // namespace phasen::cli
