#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "phasen/model/params.hpp"

namespace phasen::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  ndgrad::Shape shape;
  /// Values widened to double; written back at the container's precision.
  std::vector<double> values;
};

/// Flat container: "PHSNCKPT", u32 version, u32 bytes per value, string
/// metadata pairs, then (name, dims, little-endian values) records.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::uint32_t value_bytes = 4;
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<CheckpointRecord> records;

  /// Throws std::out_of_range when absent.
  const std::string& meta(std::string_view key) const;
  const CheckpointRecord* find(std::string_view name) const;
  void set_meta(std::string key, std::string value);
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

template <typename T>
CheckpointRecord make_record(std::string name, const ndgrad::Tensor<T>& t);

/// Arch metadata plus one record per learnable tensor and buffer.
template <typename T>
Checkpoint params_to_checkpoint(const ModelParams<T>& params);

/// Rebuilds params from the arch metadata; every layer must be present with
/// its exact shape. Records under "adam." belong to the optimizer and are
/// ignored here; any other unknown record is an error.
template <typename T>
ModelParams<T> params_from_checkpoint(const Checkpoint& ckpt);

}  // namespace phasen::model
