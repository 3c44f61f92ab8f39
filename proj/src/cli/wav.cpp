#include "phasen/cli/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace phasen::cli {

namespace {

std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace

dsp::AudioClip decode_wav(std::span<const std::uint8_t> bytes, const std::string& source) {
  auto fail = [&source](const std::string& why) -> std::runtime_error {
    return std::runtime_error("wav " + source + ": " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw fail("not a RIFF/WAVE file");

  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::size_t size = le32(chunk + 4);
    const std::size_t avail = bytes.size() - pos - 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || size > avail) throw fail("truncated fmt chunk");
      const std::uint16_t format = le16(chunk + 8);
      const std::uint16_t channels = le16(chunk + 10);
      const std::uint32_t rate = le32(chunk + 12);
      const std::uint16_t bits = le16(chunk + 22);
      if (format != 1) throw fail("format=" + std::to_string(format) + ", expected PCM (1)");
      if (channels != 1) throw fail("channels=" + std::to_string(channels) + ", expected mono");
      if (rate != static_cast<std::uint32_t>(dsp::kSampleRate))
        throw fail("sample_rate=" + std::to_string(rate) + ", expected " +
                   std::to_string(dsp::kSampleRate));
      if (bits != 16) throw fail("bits_per_sample=" + std::to_string(bits) + ", expected 16");
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = std::min(size, avail);
      if (data_size != size) throw fail("truncated data chunk");
      break;
    }
    pos += 8 + size + (size & 1);
  }
  if (!have_fmt) throw fail("missing fmt chunk");
  if (data == nullptr) throw fail("missing data chunk");
  if (data_size % 2 != 0) throw fail("odd data chunk size");

  dsp::AudioClip clip;
  clip.sample_rate = dsp::kSampleRate;
  clip.samples.resize(data_size / 2);
  for (std::size_t i = 0; i < clip.samples.size(); ++i)
    clip.samples[i] = static_cast<std::int16_t>(le16(data + 2 * i)) / 32768.0;
  if (clip.samples.empty()) throw fail("no samples");
  return clip;
}

dsp::AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav " + path.string() + ": cannot open");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_wav(bytes, path.string());
}

std::vector<std::uint8_t> encode_wav(const dsp::AudioClip& clip) {
  if (clip.sample_rate != dsp::kSampleRate)
    throw std::invalid_argument("wav: can only write " + std::to_string(dsp::kSampleRate) +
                                " Hz audio");
  const auto data_size = static_cast<std::uint32_t>(2 * clip.samples.size());
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + data_size);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put16(out, 2);
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, data_size);
  for (double s : clip.samples) {
    if (!std::isfinite(s)) throw std::invalid_argument("wav: non-finite sample");
    const double q = std::clamp(std::nearbyint(s * 32768.0), -32768.0, 32767.0);
    put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const dsp::AudioClip& clip) {
  const auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("wav " + path.string() + ": cannot write");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("wav " + path.string() + ": write failed");
}

}  // namespace phasen::cli
