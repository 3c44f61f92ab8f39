#include "phasen/optim/train.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "phasen/loss/loss.hpp"
#include "phasen/model/model.hpp"
#include "phasen/ndgrad/random.hpp"

namespace phasen::optim {

void TrainConfig::validate() const {
  auto positive = [](const char* name, double v) {
    if (!(v > 0.0)) throw std::invalid_argument(std::string(name) + " must be positive");
  };
  positive("peak_lr", peak_lr);
  positive("warmup_steps", static_cast<double>(warmup_steps));
  positive("batch_size", static_cast<double>(batch_size));
  positive("clip_seconds", clip_seconds);
  positive("epochs", static_cast<double>(epochs));
  positive("adam_beta1", adam_beta1);
  positive("adam_beta2", adam_beta2);
  positive("adam_eps", adam_eps);
  if (adam_beta1 >= 1.0 || adam_beta2 >= 1.0)
    throw std::invalid_argument("adam betas must be below 1");
}

double lr_schedule(std::size_t step, const TrainConfig& config) {
  const double ramp = static_cast<double>(step) / static_cast<double>(config.warmup_steps);
  return config.peak_lr * std::min(ramp, 1.0);
}

std::string format_step(const StepLog& row) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g", row.step, row.lr, row.amp_loss,
                row.phase_loss, row.total_loss);
  return buf;
}

template <typename T>
TrainState<T> initial_state(const model::ArchConfig& arch, std::uint64_t seed) {
  TrainState<T> s;
  s.params = model::ModelParams<T>::initialize(arch, seed);
  s.adam = AdamState<T>(s.params.learnable());
  s.rng_state = Rng(seed ^ 0x9e3779b97f4a7c15ULL).state();
  return s;
}

template <typename T>
model::Checkpoint state_to_checkpoint(const TrainState<T>& state) {
  model::Checkpoint ckpt = model::params_to_checkpoint(state.params);
  ckpt.set_meta("step", std::to_string(state.step));
  ckpt.set_meta("adam_step", std::to_string(state.adam.step));
  ckpt.set_meta("rng", state.rng_state);
  for (const auto& [name, t] : state.adam.m) ckpt.records.push_back(model::make_record("adam.m." + name, t));
  for (const auto& [name, t] : state.adam.v) ckpt.records.push_back(model::make_record("adam.v." + name, t));
  return ckpt;
}

template <typename T>
TrainState<T> state_from_checkpoint(const model::Checkpoint& ckpt) {
  TrainState<T> s;
  s.params = model::params_from_checkpoint<T>(ckpt);
  s.adam = AdamState<T>(s.params.learnable());
  auto restore = [&ckpt](NamedTensors<T>& moments, const std::string& kind) {
    for (auto& [name, t] : moments) {
      const auto* rec = ckpt.find("adam." + kind + "." + name);
      if (rec == nullptr) continue;
      if (rec->shape != t.shape())
        throw std::runtime_error("checkpoint: moment '" + rec->name + "' has wrong shape");
      auto dst = t.mutable_data();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(rec->values[i]);
    }
  };
  restore(s.adam.m, "m");
  restore(s.adam.v, "v");
  for (const auto& [key, value] : ckpt.metadata) {
    if (key == "step") s.step = std::stoull(value);
    if (key == "adam_step") s.adam.step = std::stoull(value);
    if (key == "rng") s.rng_state = value;
  }
  return s;
}

namespace {

template <typename T>
void save(const TrainState<T>& state, const std::filesystem::path& path) {
  model::write_checkpoint(path, state_to_checkpoint(state));
}

}  // namespace

template <typename T>
TrainResult<T> train(const Dataset& data, const TrainConfig& config, TrainState<T> state,
                     const TrainOptions& options) {
  config.validate();
  if (data.pairs.empty()) throw std::invalid_argument("train: empty dataset");
  const std::size_t n = data.pairs.size();
  const std::size_t batch = config.batch_size;
  const std::size_t per_epoch = (n + batch - 1) / batch;
  const std::size_t target = config.max_steps > 0 ? config.max_steps : config.epochs * per_epoch;

  Rng rng;
  if (!state.rng_state.empty())
    rng.restore(state.rng_state);
  else
    rng = Rng(config.seed);

  std::ofstream csv;
  if (!options.loss_csv.empty()) {
    csv.open(options.loss_csv, std::ios::trunc);
    if (!csv) throw std::runtime_error("train: cannot write " + options.loss_csv.string());
    csv << kLossCsvHeader << '\n';
  }
  if (!options.checkpoint_dir.empty()) std::filesystem::create_directories(options.checkpoint_dir);

  model::PhasenModel<T> net(state.params);
  const AdamConfig adam = config.adam();
  TrainResult<T> result;
  std::vector<std::size_t> order(n);

  while (state.step < target) {
    const std::size_t in_epoch = state.step % per_epoch;
    if (in_epoch == 0 || result.log.empty()) {
      Rng shuffle(config.seed ^ (0x9e3779b97f4a7c15ULL * (state.step / per_epoch + 1)));
      for (std::size_t i = 0; i < n; ++i) order[i] = i;
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.index(i)]);
    }

    std::vector<dsp::ComplexSpec> noisy_specs;
    std::vector<dsp::ComplexSpec> clean_specs;
    for (std::size_t j = 0; j < batch; ++j) {
      const std::size_t idx = n < batch ? rng.index(n) : order[(in_epoch * batch + j) % n];
      const ClipPair& pair = data.pairs[idx];
      auto [noisy, clean] = clip_segment(pair.noisy, pair.clean, config.clip_seconds, rng);
      noisy_specs.push_back(dsp::stft(noisy));
      clean_specs.push_back(dsp::stft(clean));
    }
    const ndgrad::Tensor<T> noisy = dsp::stack_specs<T>(noisy_specs);
    const ndgrad::Tensor<T> clean = dsp::stack_specs<T>(clean_specs);

    state.params.zero_grad();
    ndgrad::Graph<T> g;
    model::ForwardOptions fwd;
    fwd.training = true;
    const model::ModelOutput<T> out = net.forward(g, noisy, fwd);
    const loss::LossValue<T> l = loss::total_loss(g, out.enhanced, clean);
    g.backward(l.total);

    StepLog row;
    row.step = static_cast<std::size_t>(state.step + 1);
    row.lr = lr_schedule(row.step, config);
    row.amp_loss = static_cast<double>(l.amp.item());
    row.phase_loss = static_cast<double>(l.phase.item());
    row.total_loss = static_cast<double>(l.total.item());
    adam_step(state.adam, state.params.learnable(), row.lr, adam);
    state.step = row.step;
    state.rng_state = rng.state();

    if (csv.is_open()) csv << format_step(row) << '\n' << std::flush;
    result.log.push_back(row);
    if (options.on_step) options.on_step(row);
    if (!options.checkpoint_dir.empty() && options.checkpoint_every > 0 &&
        state.step % options.checkpoint_every == 0)
      save(state, options.checkpoint_dir / ("step_" + std::to_string(state.step) + ".ckpt"));
    if (state.step % per_epoch == 0 && options.on_epoch) options.on_epoch(state.step / per_epoch);
  }
  if (!options.checkpoint_dir.empty()) save(state, options.checkpoint_dir / "final.ckpt");
  result.state = std::move(state);
  return result;
}

template <typename T>
TrainResult<T> train(const Dataset& data, const TrainConfig& config,
                     const model::ArchConfig& arch, const TrainOptions& options) {
  return train(data, config, initial_state<T>(arch, config.seed), options);
}

#define PHASEN_INSTANTIATE_TRAIN(T)                                                          \
  template TrainState<T> initial_state<T>(const model::ArchConfig&, std::uint64_t);          \
  template model::Checkpoint state_to_checkpoint(const TrainState<T>&);                      \
  template TrainState<T> state_from_checkpoint<T>(const model::Checkpoint&);                 \
  template TrainResult<T> train(const Dataset&, const TrainConfig&, TrainState<T>,           \
                                const TrainOptions&);                                        \
  template TrainResult<T> train<T>(const Dataset&, const TrainConfig&,                       \
                                   const model::ArchConfig&, const TrainOptions&);

PHASEN_INSTANTIATE_TRAIN(float)
PHASEN_INSTANTIATE_TRAIN(double)

}  // namespace phasen::optim
