#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "phasen/model/config.hpp"
#include "phasen/optim/train.hpp"

namespace phasen::cli {

enum class Precision { kF32, kF64 };

struct RunConfig {
  model::ArchConfig arch;
  optim::TrainConfig train;
  std::string manifest;
  /// Empty means <output_dir>/checkpoints.
  std::string checkpoint_dir;
  std::string output_dir = "out";
  std::size_t checkpoint_every = 0;
  Precision precision = Precision::kF32;
  /// Score training pairs by SDR after every epoch.
  bool validate_sdr = false;

  std::filesystem::path resolved_checkpoint_dir() const;
};

/// Sets `key` from text. Throws std::invalid_argument for unknown keys or
/// malformed values.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

/// Applies "key=value".
void apply_assignment(RunConfig& config, std::string_view assignment);

/// key=value lines; '#' starts a comment, blank lines are ignored.
void apply_config_text(RunConfig& config, std::string_view text, const std::string& source);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

std::string run_config_to_text(const RunConfig& config);

}  // namespace phasen::cli
