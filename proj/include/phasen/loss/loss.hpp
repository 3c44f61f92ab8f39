#pragma once

#include "phasen/dsp/stft.hpp"
#include "phasen/ndgrad/graph.hpp"
#include "phasen/ndgrad/tensor.hpp"

namespace phasen::loss {

/// Scalar loss tensors; total = (amp + phase) / 2.
template <typename T>
struct LossValue {
  ndgrad::Tensor<T> total;
  ndgrad::Tensor<T> amp;
  ndgrad::Tensor<T> phase;
};

/// Spectrograms are [B, 2, F, T]. Mean over all bins of
/// (|est|^0.3 - |ref|^0.3)^2.
template <typename T>
ndgrad::Tensor<T> amplitude_loss(ndgrad::Graph<T>& g, const ndgrad::Tensor<T>& est,
                                 const ndgrad::Tensor<T>& ref);

/// Mean over bins and both parts of the squared difference between
/// |S|^0.3 * S/|S| for est and ref.
template <typename T>
ndgrad::Tensor<T> phase_aware_loss(ndgrad::Graph<T>& g, const ndgrad::Tensor<T>& est,
                                   const ndgrad::Tensor<T>& ref);

template <typename T>
LossValue<T> total_loss(ndgrad::Graph<T>& g, const ndgrad::Tensor<T>& est,
                        const ndgrad::Tensor<T>& ref);

struct LossScalars {
  double total = 0.0;
  double amp = 0.0;
  double phase = 0.0;
};

/// Evaluation on single spectrograms, without gradients.
LossScalars evaluate_loss(const dsp::ComplexSpec& est, const dsp::ComplexSpec& ref);

}  // namespace phasen::loss
