#include "phasen/cli/run_config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace phasen::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw std::invalid_argument(std::string(key) + ": expected " + expected + ", got '" +
                              std::string(value) + "'");
}

std::uint64_t parse_u64(std::string_view key, std::string_view value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (value.empty() || ec != std::errc() || ptr != end) bad_value(key, value, "an integer");
  return out;
}

double parse_double(std::string_view key, std::string_view value) {
  const std::string s(value);
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(s, &used);
  } catch (const std::exception&) {
    bad_value(key, value, "a number");
  }
  if (used != s.size()) bad_value(key, value, "a number");
  return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  bad_value(key, value, "true or false");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::filesystem::path RunConfig::resolved_checkpoint_dir() const {
  if (!checkpoint_dir.empty()) return checkpoint_dir;
  return std::filesystem::path(output_dir) / "checkpoints";
}

void apply_setting(RunConfig& c, std::string_view key, std::string_view value) {
  key = trim(key);
  value = trim(value);
  if (model::set_arch_field(c.arch, key, value)) return;
  auto& t = c.train;
  if (key == "peak_lr") t.peak_lr = parse_double(key, value);
  else if (key == "warmup_steps") t.warmup_steps = parse_u64(key, value);
  else if (key == "batch_size") t.batch_size = parse_u64(key, value);
  else if (key == "clip_seconds") t.clip_seconds = parse_double(key, value);
  else if (key == "epochs") t.epochs = parse_u64(key, value);
  else if (key == "max_steps") t.max_steps = parse_u64(key, value);
  else if (key == "adam_beta1") t.adam_beta1 = parse_double(key, value);
  else if (key == "adam_beta2") t.adam_beta2 = parse_double(key, value);
  else if (key == "adam_eps") t.adam_eps = parse_double(key, value);
  else if (key == "seed") t.seed = parse_u64(key, value);
  else if (key == "manifest") c.manifest = std::string(value);
  else if (key == "checkpoint_dir") c.checkpoint_dir = std::string(value);
  else if (key == "output_dir") c.output_dir = std::string(value);
  else if (key == "checkpoint_every") c.checkpoint_every = parse_u64(key, value);
  else if (key == "validate_sdr") c.validate_sdr = parse_bool(key, value);
  else if (key == "precision") {
    if (value == "f32") c.precision = Precision::kF32;
    else if (value == "f64") c.precision = Precision::kF64;
    else bad_value(key, value, "f32 or f64");
  } else {
    throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
  }
}

void apply_assignment(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw std::invalid_argument("expected key=value, got '" + std::string(assignment) + "'");
  apply_setting(config, assignment.substr(0, eq), assignment.substr(eq + 1));
}

void apply_config_text(RunConfig& config, std::string_view text, const std::string& source) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string_view body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    try {
      apply_assignment(config, body);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  apply_config_text(config, text.str(), path.string());
}

std::string run_config_to_text(const RunConfig& c) {
  std::ostringstream os;
  os << model::arch_to_text(c.arch);
  const auto& t = c.train;
  os << "peak_lr=" << fmt(t.peak_lr) << '\n'
     << "warmup_steps=" << t.warmup_steps << '\n'
     << "batch_size=" << t.batch_size << '\n'
     << "clip_seconds=" << fmt(t.clip_seconds) << '\n'
     << "epochs=" << t.epochs << '\n'
     << "max_steps=" << t.max_steps << '\n'
     << "adam_beta1=" << fmt(t.adam_beta1) << '\n'
     << "adam_beta2=" << fmt(t.adam_beta2) << '\n'
     << "adam_eps=" << fmt(t.adam_eps) << '\n'
     << "seed=" << t.seed << '\n'
     << "manifest=" << c.manifest << '\n'
     << "checkpoint_dir=" << c.checkpoint_dir << '\n'
     << "output_dir=" << c.output_dir << '\n'
     << "checkpoint_every=" << c.checkpoint_every << '\n'
     << "precision=" << (c.precision == Precision::kF64 ? "f64" : "f32") << '\n'
     << "validate_sdr=" << (c.validate_sdr ? "true" : "false") << '\n';
  return os.str();
}

}  // namespace phasen::cli
