#include "phasen/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <stdexcept>

namespace phasen::metrics {

namespace {

void check_pair(const char* op, const dsp::AudioClip& clean, const dsp::AudioClip& enhanced) {
  if (clean.size() != enhanced.size())
    throw std::invalid_argument(std::string(op) + ": length mismatch " +
                                std::to_string(clean.size()) + " vs " +
                                std::to_string(enhanced.size()));
  if (clean.sample_rate != enhanced.sample_rate)
    throw std::invalid_argument(std::string(op) + ": sample rate mismatch");
}

double ratio_db(double signal, double noise) {
  if (noise <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(signal / noise);
}

}  // namespace

double ssnr(const dsp::AudioClip& clean, const dsp::AudioClip& enhanced) {
  check_pair("ssnr", clean, enhanced);
  double total = 0.0;
  std::size_t frames = 0;
  for (std::size_t start = 0; start + kSsnrFrame <= clean.size(); start += kSsnrHop) {
    double sig = 0.0;
    double err = 0.0;
    for (std::size_t i = start; i < start + kSsnrFrame; ++i) {
      const double s = clean.samples[i];
      const double d = s - enhanced.samples[i];
      sig += s * s;
      err += d * d;
    }
    if (sig < kSsnrSilence) continue;
    total += std::clamp(ratio_db(sig, err), kSsnrMin, kSsnrMax);
    ++frames;
  }
  if (frames == 0) throw std::invalid_argument("ssnr: no scoreable frames");
  return total / static_cast<double>(frames);
}

double sdr(const dsp::AudioClip& clean, const dsp::AudioClip& enhanced) {
  check_pair("sdr", clean, enhanced);
  double sig = 0.0;
  double err = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double s = clean.samples[i];
    const double d = s - enhanced.samples[i];
    sig += s * s;
    err += d * d;
  }
  if (sig == 0.0) throw std::invalid_argument("sdr: clean signal is all zeros");
  return std::min(ratio_db(sig, err), kSdrCap);
}

double EvalReport::mean_ssnr() const {
  double s = 0.0;
  for (const auto& r : rows) s += r.ssnr_db;
  return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

double EvalReport::mean_sdr() const {
  double s = 0.0;
  for (const auto& r : rows) s += r.sdr_db;
  return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
}

void EvalReport::add(std::string path, const dsp::AudioClip& clean,
                     const dsp::AudioClip& enhanced) {
  rows.push_back({std::move(path), ssnr(clean, enhanced), sdr(clean, enhanced)});
}

void EvalReport::write_csv(std::ostream& os) const {
  char buf[64];
  os << "path,ssnr_db,sdr_db\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", r.ssnr_db, r.sdr_db);
    os << r.path << buf;
  }
  std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", mean_ssnr(), mean_sdr());
  os << "MEAN" << buf;
}

void EvalReport::write_table(std::ostream& os) const {
  std::size_t width = 4;
  for (const auto& r : rows) width = std::max(width, r.path.size());
  const int w = static_cast<int>(width);
  const auto flags = os.flags();
  os << std::left << std::setw(w) << "file" << std::right << "  " << std::setw(10) << "SSNR(dB)"
     << "  " << std::setw(10) << "SDR(dB)" << '\n';
  os << std::fixed << std::setprecision(3);
  auto line = [&](const std::string& name, double a, double b) {
    os << std::left << std::setw(w) << name << std::right << "  " << std::setw(10) << a << "  "
       << std::setw(10) << b << '\n';
  };
  for (const auto& r : rows) line(r.path, r.ssnr_db, r.sdr_db);
  line("MEAN", mean_ssnr(), mean_sdr());
  os.flags(flags);
  os << "SDR is the plain signal-to-distortion ratio (not scale-invariant).\n";
}

}  // namespace phasen::metrics
