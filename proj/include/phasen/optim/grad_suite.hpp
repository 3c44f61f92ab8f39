#pragma once

#include <cstddef>
#include <cstdint>

#include "phasen/model/config.hpp"
#include "phasen/ndgrad/grad_check.hpp"

namespace phasen::optim {

struct ModelGradCheckOptions {
  double seconds = 0.2;
  std::size_t coords_per_tensor = 20;
  double step = 1e-6;
  std::uint64_t seed = 42;
};

/// Finite-difference check of d(total_loss)/d(param) for every learnable
/// tensor of a freshly initialized 64-bit model, on a random noisy clip
/// scored against a random reference.
ndgrad::ParameterCheckReport model_gradient_check(const model::ArchConfig& arch,
                                                  const ModelGradCheckOptions& options = {});

}  // namespace phasen::optim
