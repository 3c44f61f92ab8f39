#pragma once

#include <cstddef>

#include "phasen/ndgrad/graph.hpp"
#include "phasen/ndgrad/tensor.hpp"

// Differentiable operations. Feature maps use the layout [batch, channel,
// height, width]; in the speech model height is frequency and width is time.
// Every op computes its value immediately and tapes itself on `g` when any
// input requires a gradient.
namespace phasen::ndgrad {

inline constexpr double kNormEps = 1e-8;

/// Stride-1 cross-correlation with symmetric "same" padding. Kernel dims must
/// be odd. `bias` may be undefined.
template <typename T>
Tensor<T> conv2d(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& weight,
                 const Tensor<T>& bias);

/// Global layer norm: statistics over all of (C, H, W) for each sample,
/// per-channel affine.
template <typename T>
Tensor<T> global_layer_norm(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& gamma,
                            const Tensor<T>& beta, double eps = kNormEps);

template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.1;
};

/// Batch norm over (B, H, W) per channel. Training mode normalizes with batch
/// statistics and updates `state`; eval mode uses the running statistics.
template <typename T>
Tensor<T> batch_norm(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, BatchNormState<T>& state, bool training,
                     double eps = kNormEps);

/// out = x for x > 0, slope[c] * x otherwise; channel is axis 1.
/// ReLU is this op with an all-zero slope.
template <typename T>
Tensor<T> prelu(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& slope);

template <typename T>
Tensor<T> tanh(Graph<T>& g, const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(Graph<T>& g, const Tensor<T>& x);

template <typename T>
Tensor<T> add(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(Graph<T>& g, const Tensor<T>& x, T factor);

/// x: [B, C, H, W], w: [B, 1, H, W] broadcast over channels.
template <typename T>
Tensor<T> mul_channels(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& w);

/// [B, C, H, W] -> [B, H, C, W].
template <typename T>
Tensor<T> swap_channel_height(Graph<T>& g, const Tensor<T>& x);

template <typename T>
Tensor<T> reshape(Graph<T>& g, const Tensor<T>& x, Shape shape);

/// Per-bin Euclidean norm of a 2-channel map: [B, 2, H, W] -> [B, 1, H, W].
template <typename T>
Tensor<T> magnitude(Graph<T>& g, const Tensor<T>& x);

/// Scales each 2-vector of a [B, 2, H, W] map to unit length. Bins with
/// norm below kUnitGuard become (1, 0) and pass no gradient.
inline constexpr double kUnitGuard = 1e-12;
template <typename T>
Tensor<T> unit_normalize(Graph<T>& g, const Tensor<T>& x);

/// x^p for x >= 0. The derivative is evaluated at max(x, kPowerLawFloor).
inline constexpr double kPowerLawFloor = 1e-12;
template <typename T>
Tensor<T> power_law(Graph<T>& g, const Tensor<T>& x, double p);

/// Mean of squared differences, as a scalar tensor.
template <typename T>
Tensor<T> mse(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sum(Graph<T>& g, const Tensor<T>& x);

}  // namespace phasen::ndgrad
