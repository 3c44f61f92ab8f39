#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>

#include "phasen/dsp/stft.hpp"
#include "phasen/model/params.hpp"
#include "phasen/ndgrad/graph.hpp"
#include "phasen/ndgrad/ops.hpp"
#include "phasen/ndgrad/tensor.hpp"

namespace phasen::model {

struct ForwardOptions {
  /// Batch-norm uses batch statistics and updates running statistics.
  bool training = false;
  /// Replace the mask by ones.
  bool unit_mask = false;
  /// Replace the phase estimate by the noisy phase.
  bool noisy_phase = false;
};

/// All tensors are batched: mask [B, 1, F, T], phase and enhanced [B, 2, F, T].
template <typename T>
struct ModelOutput {
  ndgrad::Tensor<T> mask;
  ndgrad::Tensor<T> phase;
  ndgrad::Tensor<T> enhanced;
};

template <typename T>
class PhasenModel {
 public:
  explicit PhasenModel(ModelParams<T> params);

  const ModelParams<T>& params() const { return params_; }
  const ArchConfig& config() const { return params_.config(); }

  /// noisy_spec: [B, 2, F, T] complex spectrogram.
  ModelOutput<T> forward(ndgrad::Graph<T>& g, const ndgrad::Tensor<T>& noisy_spec,
                         const ForwardOptions& options = {});

  /// spec and its unit-normalized copy -> (amplitude [B, A, F, T], phase [B, P, F, T]).
  std::pair<ndgrad::Tensor<T>, ndgrad::Tensor<T>> prevnet(ndgrad::Graph<T>& g,
                                                          const ndgrad::Tensor<T>& spec,
                                                          const ndgrad::Tensor<T>& unit_spec,
                                                          bool training);

  /// Single-channel attention map [B, 1, F, T]. `prefix` is e.g. "tsb.0.spa.1".
  ndgrad::Tensor<T> spa_attention(ndgrad::Graph<T>& g, const ndgrad::Tensor<T>& a,
                                  const std::string& prefix, bool training);
  ndgrad::Tensor<T> spa(ndgrad::Graph<T>& g, const ndgrad::Tensor<T>& a,
                        const std::string& prefix, bool training);

  std::pair<ndgrad::Tensor<T>, ndgrad::Tensor<T>> tsb(ndgrad::Graph<T>& g,
                                                      const ndgrad::Tensor<T>& a,
                                                      const ndgrad::Tensor<T>& p,
                                                      std::size_t index, bool training);

  /// noisy_magnitude: [B, 1, F, T].
  ModelOutput<T> postnet(ndgrad::Graph<T>& g, const ndgrad::Tensor<T>& a,
                         const ndgrad::Tensor<T>& p, const ndgrad::Tensor<T>& noisy_magnitude,
                         bool training);

 private:
  ndgrad::Tensor<T> conv(ndgrad::Graph<T>& g, const ndgrad::Tensor<T>& x,
                         const std::string& name);
  ndgrad::Tensor<T> norm(ndgrad::Graph<T>& g, const ndgrad::Tensor<T>& x,
                         const std::string& name, bool training);
  ndgrad::Tensor<T> act(ndgrad::Graph<T>& g, const ndgrad::Tensor<T>& x,
                        const std::string& name);
  ndgrad::Tensor<T> phase_act(ndgrad::Graph<T>& g, const ndgrad::Tensor<T>& x,
                              const std::string& name);
  // conv -> norm -> act with names stem, stem_norm, stem_act.
  ndgrad::Tensor<T> block(ndgrad::Graph<T>& g, const ndgrad::Tensor<T>& x,
                          const std::string& stem, bool training);
  const ndgrad::Tensor<T>& zero_slope(std::size_t channels);

  ModelParams<T> params_;
  std::map<std::string, ndgrad::BatchNormState<T>> bn_;
  std::map<std::size_t, ndgrad::Tensor<T>> zero_slopes_;
};

template <typename T>
struct Enhancement {
  ModelOutput<T> output;
  dsp::AudioClip audio;
};

/// stft -> network -> istft for one clip, without gradient recording.
/// The enhanced clip has the input's length.
template <typename T>
Enhancement<T> model_forward(PhasenModel<T>& model, const dsp::AudioClip& noisy,
                             const ForwardOptions& options = {});

extern template class PhasenModel<float>;
extern template class PhasenModel<double>;

}  // namespace phasen::model
