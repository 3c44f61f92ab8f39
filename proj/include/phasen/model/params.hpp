#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "phasen/model/config.hpp"
#include "phasen/ndgrad/tensor.hpp"

namespace phasen::model {

enum class ParamRole { kConvWeight, kBias, kGamma, kBeta, kSlope, kRunningMean, kRunningVar };

struct ParamSpec {
  std::string name;
  ndgrad::Shape shape;
  ParamRole role;
  /// Input fan of the layer a weight belongs to.
  std::size_t fan_in = 0;
};

struct ParamLayout {
  std::vector<ParamSpec> learnable;
  /// Non-learnable state (batch-norm running statistics).
  std::vector<ParamSpec> buffers;
};

/// Every tensor the network described by `config` owns, in forward order.
ParamLayout param_layout(const ArchConfig& config);

/// Named weights of one network plus the config that shaped them.
template <typename T>
class ModelParams {
 public:
  using Entry = std::pair<std::string, ndgrad::Tensor<T>>;

  ModelParams() = default;
  /// Throws std::invalid_argument unless the names and shapes are exactly
  /// those of param_layout(config).
  ModelParams(ArchConfig config, std::vector<Entry> learnable, std::vector<Entry> buffers);

  /// He-uniform weights (bound sqrt(6 / fan_in)), zero biases, unit gamma,
  /// zero beta, 0.25 slopes.
  static ModelParams initialize(const ArchConfig& config, std::uint64_t seed);

  const ArchConfig& config() const { return config_; }
  const std::vector<Entry>& learnable() const { return learnable_; }
  const std::vector<Entry>& buffers() const { return buffers_; }

  /// Learnable tensor by name; throws std::out_of_range.
  const ndgrad::Tensor<T>& at(std::string_view name) const;
  const ndgrad::Tensor<T>& buffer(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t total_elements() const;
  void zero_grad() const;
  /// Deep copy.
  ModelParams clone() const;

  template <typename U>
  ModelParams<U> cast() const;

 private:
  ArchConfig config_;
  std::vector<Entry> learnable_;
  std::vector<Entry> buffers_;
};

struct ParamCount {
  std::size_t total = 0;
  /// (block, elements) for prevnet, tsb.N and postnet, in network order;
  /// blocks with nothing under the prefix are omitted.
  std::vector<std::pair<std::string, std::size_t>> blocks;
};

/// Learnable elements under a dotted-path prefix ("" counts everything).
/// Throws std::invalid_argument when no tensor matches the prefix.
ParamCount count_params(const ArchConfig& config, std::string_view prefix = "");

template <typename T>
ParamCount count_params(const ModelParams<T>& params, std::string_view prefix = "");

/// "tsb.1.spa.0.freq_conv.weight" -> "tsb.1"; "postnet.fc0.bias" -> "postnet".
std::string block_of(std::string_view name);

/// True when `name` equals `prefix` or continues it at a '.' boundary.
bool path_has_prefix(std::string_view name, std::string_view prefix);

extern template class ModelParams<float>;
extern template class ModelParams<double>;

}  // namespace phasen::model
