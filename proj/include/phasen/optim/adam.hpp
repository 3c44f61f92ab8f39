#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "phasen/ndgrad/tensor.hpp"

namespace phasen::optim {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
using NamedTensors = std::vector<std::pair<std::string, ndgrad::Tensor<T>>>;

/// First and second moments mirroring a parameter list, plus the number of
/// updates applied so far.
template <typename T>
struct AdamState {
  NamedTensors<T> m;
  NamedTensors<T> v;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(const NamedTensors<T>& params);
};

/// One bias-corrected Adam update. Parameters without a gradient buffer are
/// treated as having a zero gradient. Throws std::runtime_error naming the
/// first parameter whose gradient is not finite, before anything is
/// modified.
template <typename T>
void adam_step(AdamState<T>& state, const NamedTensors<T>& params, double lr,
               const AdamConfig& config = {});

extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace phasen::optim
