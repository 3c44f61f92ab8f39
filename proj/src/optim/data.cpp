#include "phasen/optim/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace phasen::optim {

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path.string());
  const std::filesystem::path base = path.parent_path();
  auto resolve = [&base](const std::string& s) {
    std::filesystem::path p(s);
    return p.is_absolute() ? p : base / p;
  };
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos)
      throw std::runtime_error("manifest: " + path.string() + ":" + std::to_string(lineno) +
                               ": expected noisy<TAB>clean");
    out.push_back({resolve(line.substr(0, tab)), resolve(line.substr(tab + 1))});
  }
  if (out.empty()) throw std::runtime_error("manifest: " + path.string() + " lists no pairs");
  return out;
}

Dataset load_dataset(const std::vector<ManifestEntry>& manifest, const ClipReader& reader) {
  Dataset out;
  for (const auto& entry : manifest) {
    try {
      ClipPair pair{entry.noisy.filename().string(), reader(entry.noisy), reader(entry.clean)};
      if (pair.noisy.size() != pair.clean.size())
        throw std::runtime_error("noisy has " + std::to_string(pair.noisy.size()) +
                                 " samples, clean has " + std::to_string(pair.clean.size()));
      out.pairs.push_back(std::move(pair));
    } catch (const std::exception& e) {
      out.warnings.push_back("skipping " + entry.noisy.string() + ": " + e.what());
    }
  }
  if (out.pairs.empty()) throw std::runtime_error("dataset: no readable pairs in manifest");
  return out;
}

std::pair<dsp::AudioClip, dsp::AudioClip> clip_segment(const dsp::AudioClip& noisy,
                                                       const dsp::AudioClip& clean,
                                                       double seconds, Rng& rng) {
  if (noisy.size() != clean.size() || noisy.sample_rate != clean.sample_rate)
    throw std::invalid_argument("clip_segment: noisy/clean mismatch (" +
                                std::to_string(noisy.size()) + " vs " +
                                std::to_string(clean.size()) + " samples)");
  if (!(seconds > 0.0)) throw std::invalid_argument("clip_segment: seconds must be positive");
  const auto length = static_cast<std::size_t>(std::llround(seconds * noisy.sample_rate));
  std::size_t offset = 0;
  if (noisy.size() > length) offset = rng.index(noisy.size() - length + 1);
  auto cut = [&](const dsp::AudioClip& clip) {
    dsp::AudioClip out{std::vector<double>(length, 0.0), clip.sample_rate};
    const std::size_t n = std::min(length, clip.size() - offset);
    std::copy_n(clip.samples.begin() + static_cast<std::ptrdiff_t>(offset), n,
                out.samples.begin());
    return out;
  };
  return {cut(noisy), cut(clean)};
}

}  // namespace phasen::optim
