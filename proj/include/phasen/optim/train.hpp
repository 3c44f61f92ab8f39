#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "phasen/model/checkpoint.hpp"
#include "phasen/model/config.hpp"
#include "phasen/model/params.hpp"
#include "phasen/optim/adam.hpp"
#include "phasen/optim/data.hpp"

namespace phasen::optim {

struct TrainConfig {
  double peak_lr = 2e-4;
  std::size_t warmup_steps = 6000;
  std::size_t batch_size = 4;
  double clip_seconds = 3.0;
  std::size_t epochs = 50;
  /// When non-zero, stop after this many updates regardless of epochs.
  std::size_t max_steps = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
  AdamConfig adam() const { return {adam_beta1, adam_beta2, adam_eps}; }
};

/// peak_lr * min(step / warmup_steps, 1).
double lr_schedule(std::size_t step, const TrainConfig& config);

template <typename T>
struct TrainState {
  model::ModelParams<T> params;
  AdamState<T> adam;
  std::uint64_t step = 0;
  std::string rng_state;
};

/// Fresh state: initialized params, zero moments, rng seeded from `seed`.
template <typename T>
TrainState<T> initial_state(const model::ArchConfig& arch, std::uint64_t seed);

template <typename T>
model::Checkpoint state_to_checkpoint(const TrainState<T>& state);
template <typename T>
TrainState<T> state_from_checkpoint(const model::Checkpoint& ckpt);

struct StepLog {
  std::size_t step = 0;
  double lr = 0.0;
  double amp_loss = 0.0;
  double phase_loss = 0.0;
  double total_loss = 0.0;
};

inline constexpr std::string_view kLossCsvHeader = "step,lr,amp_loss,phase_loss,total_loss";
std::string format_step(const StepLog& row);

struct TrainOptions {
  /// Loss CSV destination; empty disables it.
  std::filesystem::path loss_csv;
  /// Checkpoint directory; empty disables checkpoints.
  std::filesystem::path checkpoint_dir;
  /// Write step_N.ckpt every this many steps (0: only final.ckpt).
  std::size_t checkpoint_every = 0;
  std::function<void(const StepLog&)> on_step;
  /// Called after each completed epoch with the 1-based epoch number.
  std::function<void(std::size_t)> on_epoch;
};

template <typename T>
struct TrainResult {
  TrainState<T> state;
  std::vector<StepLog> log;
};

/// Runs until `epochs` passes of ceil(N / batch) steps (or max_steps).
/// Each epoch visits a fresh shuffle; with fewer pairs than the batch size,
/// batch members are drawn with replacement. Training continues from
/// `state`, so a restored checkpoint resumes where it stopped.
template <typename T>
TrainResult<T> train(const Dataset& data, const TrainConfig& config, TrainState<T> state,
                     const TrainOptions& options = {});

template <typename T>
TrainResult<T> train(const Dataset& data, const TrainConfig& config,
                     const model::ArchConfig& arch, const TrainOptions& options = {});

}  // namespace phasen::optim
