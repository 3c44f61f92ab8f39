#include "phasen/model/config.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>
#include <string>

namespace phasen::model {

namespace {

std::size_t parse_size(std::string_view key, std::string_view value) {
  std::size_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end)
    throw std::invalid_argument(std::string(key) + ": expected a non-negative integer, got '" +
                                std::string(value) + "'");
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

NormKind parse_norm(std::string_view value) {
  const std::string v = lower(value);
  if (v == "gln" || v == "ln") return NormKind::kGlobalLayer;
  if (v == "bn") return NormKind::kBatch;
  throw std::invalid_argument("norm_kind: expected gln or bn, got '" + std::string(value) + "'");
}

ActKind parse_act(std::string_view value) {
  const std::string v = lower(value);
  if (v == "prelu") return ActKind::kPrelu;
  if (v == "relu") return ActKind::kRelu;
  throw std::invalid_argument("act_kind: expected prelu or relu, got '" + std::string(value) +
                              "'");
}

PhaseAct parse_phase_act(std::string_view value) {
  const std::string v = lower(value);
  if (v == "prelu") return PhaseAct::kPrelu;
  if (v == "relu") return PhaseAct::kRelu;
  if (v == "none") return PhaseAct::kNone;
  throw std::invalid_argument("phase_act: expected prelu, relu or none, got '" +
                              std::string(value) + "'");
}

}  // namespace

std::string_view to_string(NormKind kind) { return kind == NormKind::kBatch ? "bn" : "gln"; }
std::string_view to_string(ActKind kind) { return kind == ActKind::kRelu ? "relu" : "prelu"; }
std::string_view to_string(PhaseAct kind) {
  switch (kind) {
    case PhaseAct::kPrelu: return "prelu";
    case PhaseAct::kRelu: return "relu";
    case PhaseAct::kNone: return "none";
  }
  return "prelu";
}

void ArchConfig::validate() const {
  const std::pair<const char*, std::size_t> sizes[] = {
      {"amp_channels", amp_channels},
      {"phase_channels", phase_channels},
      {"spa_mid_channels", spa_mid_channels},
      {"spa_time_kernel", spa_time_kernel},
      {"freq_bins", freq_bins},
      {"num_tsb", num_tsb},
      {"postnet_conv_filters", postnet_conv_filters},
      {"postnet_narrow_channels", postnet_narrow_channels},
  };
  for (const auto& [name, value] : sizes)
    if (value == 0) throw std::invalid_argument(std::string(name) + " must be positive");
  if (spa_time_kernel % 2 == 0)
    throw std::invalid_argument("spa_time_kernel must be odd, got " +
                                std::to_string(spa_time_kernel));
}

std::string ArchConfig::variant_name() const {
  std::string name = norm == NormKind::kBatch ? "SPA-BN" : "SPA-LN";
  name += act == ActKind::kRelu ? "-ReLU" : "-PReLU";
  if (phase_act == PhaseAct::kRelu) name += "-phaseReLU";
  if (phase_act == PhaseAct::kNone) name += "-phaseLinear";
  return name;
}

bool set_arch_field(ArchConfig& c, std::string_view key, std::string_view value) {
  if (key == "amp_channels") c.amp_channels = parse_size(key, value);
  else if (key == "phase_channels") c.phase_channels = parse_size(key, value);
  else if (key == "spa_mid_channels") c.spa_mid_channels = parse_size(key, value);
  else if (key == "spa_time_kernel") c.spa_time_kernel = parse_size(key, value);
  else if (key == "freq_bins") c.freq_bins = parse_size(key, value);
  else if (key == "num_tsb") c.num_tsb = parse_size(key, value);
  else if (key == "postnet_conv_filters") c.postnet_conv_filters = parse_size(key, value);
  else if (key == "postnet_narrow_channels") c.postnet_narrow_channels = parse_size(key, value);
  else if (key == "norm_kind") c.norm = parse_norm(value);
  else if (key == "act_kind") c.act = parse_act(value);
  else if (key == "phase_act") c.phase_act = parse_phase_act(value);
  else return false;
  return true;
}

std::string arch_to_text(const ArchConfig& c) {
  std::ostringstream os;
  os << "amp_channels=" << c.amp_channels << '\n'
     << "phase_channels=" << c.phase_channels << '\n'
     << "spa_mid_channels=" << c.spa_mid_channels << '\n'
     << "spa_time_kernel=" << c.spa_time_kernel << '\n'
     << "freq_bins=" << c.freq_bins << '\n'
     << "num_tsb=" << c.num_tsb << '\n'
     << "postnet_conv_filters=" << c.postnet_conv_filters << '\n'
     << "postnet_narrow_channels=" << c.postnet_narrow_channels << '\n'
     << "norm_kind=" << to_string(c.norm) << '\n'
     << "act_kind=" << to_string(c.act) << '\n'
     << "phase_act=" << to_string(c.phase_act) << '\n';
  return os.str();
}

ArchConfig arch_from_text(std::string_view text) {
  ArchConfig c;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("arch config: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    if (!set_arch_field(c, key, std::string_view(line).substr(eq + 1)))
      throw std::invalid_argument("arch config: unknown key '" + key + "'");
  }
  c.validate();
  return c;
}

}  // namespace phasen::model
