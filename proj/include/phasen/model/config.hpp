#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace phasen::model {

/// (frequency, time) extent of a convolution kernel.
struct Kernel {
  std::size_t freq;
  std::size_t time;
};

inline constexpr Kernel kPrevAmpKernels[2] = {{1, 7}, {7, 1}};
inline constexpr Kernel kPrevPhaseKernels[2] = {{5, 3}, {25, 1}};
inline constexpr Kernel kTsbAmpKernels[3] = {{5, 5}, {1, 25}, {5, 5}};
inline constexpr Kernel kTsbPhaseKernel = {3, 5};
inline constexpr std::size_t kSpaPerTsb = 2;
inline constexpr std::size_t kPostnetFcLayers = 3;

enum class NormKind { kGlobalLayer, kBatch };
enum class ActKind { kPrelu, kRelu };
enum class PhaseAct { kPrelu, kRelu, kNone };

/// Shape-defining hyper-parameters of the two-stream network. Defaults are
/// the published configuration.
struct ArchConfig {
  std::size_t amp_channels = 96;
  std::size_t phase_channels = 48;
  std::size_t spa_mid_channels = 5;
  std::size_t spa_time_kernel = 9;
  std::size_t freq_bins = 257;
  std::size_t num_tsb = 3;
  std::size_t postnet_conv_filters = 600;
  std::size_t postnet_narrow_channels = 8;
  NormKind norm = NormKind::kGlobalLayer;
  ActKind act = ActKind::kPrelu;
  PhaseAct phase_act = PhaseAct::kPrelu;

  /// Throws std::invalid_argument on zero sizes or an even time kernel.
  void validate() const;
  /// Table-style label, e.g. "SPA-LN-PReLU".
  std::string variant_name() const;

  bool operator==(const ArchConfig&) const = default;
};

/// Sets one field from its text form. Returns false for unknown keys and
/// throws std::invalid_argument for malformed values.
bool set_arch_field(ArchConfig& config, std::string_view key, std::string_view value);

/// key=value lines, one per field, in declaration order.
std::string arch_to_text(const ArchConfig& config);
ArchConfig arch_from_text(std::string_view text);

std::string_view to_string(NormKind kind);
std::string_view to_string(ActKind kind);
std::string_view to_string(PhaseAct kind);

}  // namespace phasen::model
