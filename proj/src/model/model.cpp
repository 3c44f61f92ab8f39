#include "phasen/model/model.hpp"

#include <stdexcept>

namespace phasen::model {

using ndgrad::Graph;
using ndgrad::Tensor;

template <typename T>
PhasenModel<T>::PhasenModel(ModelParams<T> params) : params_(std::move(params)) {
  for (const auto& [name, t] : params_.buffers()) {
    const auto dot = name.rfind('.');
    const std::string stem = name.substr(0, dot);
    auto& state = bn_[stem];
    if (name.ends_with(".running_mean"))
      state.running_mean = t;
    else
      state.running_var = t;
  }
}

template <typename T>
Tensor<T> PhasenModel<T>::conv(Graph<T>& g, const Tensor<T>& x, const std::string& name) {
  return ndgrad::conv2d(g, x, params_.at(name + ".weight"), params_.at(name + ".bias"));
}

template <typename T>
Tensor<T> PhasenModel<T>::norm(Graph<T>& g, const Tensor<T>& x, const std::string& name,
                               bool training) {
  const auto& gamma = params_.at(name + ".gamma");
  const auto& beta = params_.at(name + ".beta");
  if (config().norm == NormKind::kBatch)
    return ndgrad::batch_norm(g, x, gamma, beta, bn_.at(name), training);
  return ndgrad::global_layer_norm(g, x, gamma, beta);
}

template <typename T>
const Tensor<T>& PhasenModel<T>::zero_slope(std::size_t channels) {
  auto it = zero_slopes_.find(channels);
  if (it == zero_slopes_.end())
    it = zero_slopes_.emplace(channels, Tensor<T>::full({channels}, T(0))).first;
  return it->second;
}

template <typename T>
Tensor<T> PhasenModel<T>::act(Graph<T>& g, const Tensor<T>& x, const std::string& name) {
  if (config().act == ActKind::kRelu) return ndgrad::prelu(g, x, zero_slope(x.dim(1)));
  return ndgrad::prelu(g, x, params_.at(name + ".slope"));
}

template <typename T>
Tensor<T> PhasenModel<T>::phase_act(Graph<T>& g, const Tensor<T>& x, const std::string& name) {
  switch (config().phase_act) {
    case PhaseAct::kPrelu: return ndgrad::prelu(g, x, params_.at(name + ".slope"));
    case PhaseAct::kRelu: return ndgrad::prelu(g, x, zero_slope(x.dim(1)));
    case PhaseAct::kNone: break;
  }
  return x;
}

template <typename T>
Tensor<T> PhasenModel<T>::block(Graph<T>& g, const Tensor<T>& x, const std::string& stem,
                                bool training) {
  return act(g, norm(g, conv(g, x, stem), stem + "_norm", training), stem + "_act");
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> PhasenModel<T>::prevnet(Graph<T>& g, const Tensor<T>& spec,
                                                        const Tensor<T>& unit_spec,
                                                        bool training) {
  Tensor<T> a = block(g, spec, "prevnet.amp_conv0", training);
  a = block(g, a, "prevnet.amp_conv1", training);
  Tensor<T> p = phase_act(g, conv(g, unit_spec, "prevnet.phase_conv0"), "prevnet.phase_conv0_act");
  p = phase_act(g, conv(g, p, "prevnet.phase_conv1"), "prevnet.phase_conv1_act");
  return {a, p};
}

template <typename T>
Tensor<T> PhasenModel<T>::spa_attention(Graph<T>& g, const Tensor<T>& a,
                                        const std::string& prefix, bool training) {
  if (a.rank() != 4 || a.dim(2) != config().freq_bins)
    throw std::invalid_argument("spa: expected [B, C, " + std::to_string(config().freq_bins) +
                                ", T] input, got " + ndgrad::shape_str(a.shape()));
  const std::string p = prefix + ".";
  Tensor<T> w = conv(g, a, p + "channel_conv");
  w = act(g, norm(g, w, p + "channel_norm", training), p + "channel_act");
  w = ndgrad::swap_channel_height(g, w);
  w = conv(g, w, p + "freq_conv");
  w = act(g, norm(g, w, p + "freq_norm", training), p + "freq_act");
  w = ndgrad::swap_channel_height(g, w);
  // bias cancels under global layer norm
  if (config().norm == NormKind::kGlobalLayer)
    w = ndgrad::conv2d(g, w, params_.at(p + "time_conv.weight"), Tensor<T>{});
  else
    w = conv(g, w, p + "time_conv");
  return act(g, norm(g, w, p + "time_norm", training), p + "time_act");
}

template <typename T>
Tensor<T> PhasenModel<T>::spa(Graph<T>& g, const Tensor<T>& a, const std::string& prefix,
                              bool training) {
  return ndgrad::mul_channels(g, a, spa_attention(g, a, prefix, training));
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> PhasenModel<T>::tsb(Graph<T>& g, const Tensor<T>& a,
                                                    const Tensor<T>& p, std::size_t index,
                                                    bool training) {
  const std::string pre = "tsb." + std::to_string(index) + ".";
  Tensor<T> x = spa(g, a, pre + "spa.0", training);
  for (std::size_t k = 0; k < 3; ++k) x = block(g, x, pre + "amp_conv" + std::to_string(k), training);
  x = spa(g, x, pre + "spa.1", training);
  Tensor<T> q = phase_act(g, conv(g, p, pre + "phase_conv"), pre + "phase_conv_act");
  Tensor<T> a_out = ndgrad::mul(g, x, ndgrad::tanh(g, conv(g, q, pre + "phase_to_amp")));
  Tensor<T> p_out = ndgrad::mul(g, q, ndgrad::tanh(g, conv(g, x, pre + "amp_to_phase")));
  return {a_out, p_out};
}

template <typename T>
ModelOutput<T> PhasenModel<T>::postnet(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& p,
                                       const Tensor<T>& noisy_magnitude, bool training) {
  const std::size_t batch = a.dim(0);
  const std::size_t freq = a.dim(2);
  const std::size_t frames = a.dim(3);
  Tensor<T> x = block(g, a, "postnet.narrow_conv", training);
  x = ndgrad::reshape(g, x, {batch, x.dim(1) * freq, 1, frames});
  x = block(g, x, "postnet.frame_conv", training);
  for (std::size_t k = 0; k + 1 < kPostnetFcLayers; ++k)
    x = block(g, x, "postnet.fc" + std::to_string(k), training);
  x = conv(g, x, "postnet.fc" + std::to_string(kPostnetFcLayers - 1));
  ModelOutput<T> out;
  out.mask = ndgrad::reshape(g, ndgrad::sigmoid(g, x), {batch, 1, freq, frames});
  out.phase = ndgrad::unit_normalize(g, conv(g, p, "postnet.phase_conv"));
  out.enhanced =
      ndgrad::mul_channels(g, out.phase, ndgrad::mul(g, out.mask, noisy_magnitude));
  return out;
}

template <typename T>
ModelOutput<T> PhasenModel<T>::forward(Graph<T>& g, const Tensor<T>& noisy_spec,
                                       const ForwardOptions& options) {
  const ArchConfig& c = config();
  if (noisy_spec.rank() != 4 || noisy_spec.dim(1) != 2 || noisy_spec.dim(2) != c.freq_bins)
    throw std::invalid_argument("model: expected [B, 2, " + std::to_string(c.freq_bins) +
                                ", T] spectrogram, got " + ndgrad::shape_str(noisy_spec.shape()));
  const Tensor<T> unit = ndgrad::unit_normalize(g, noisy_spec);
  const Tensor<T> mag = ndgrad::magnitude(g, noisy_spec);

  ModelOutput<T> out;
  if (options.unit_mask && options.noisy_phase) {
    // Both overrides together bypass the network.
    out.mask = Tensor<T>::full(mag.shape(), T(1));
    out.phase = unit;
  } else {
    auto [a, p] = prevnet(g, noisy_spec, unit, options.training);
    for (std::size_t i = 0; i < c.num_tsb; ++i) std::tie(a, p) = tsb(g, a, p, i, options.training);
    out = postnet(g, a, p, mag, options.training);
    if (options.unit_mask) out.mask = Tensor<T>::full(mag.shape(), T(1));
    if (options.noisy_phase) out.phase = unit;
    if (!options.unit_mask && !options.noisy_phase) return out;
  }
  out.enhanced = ndgrad::mul_channels(g, out.phase, ndgrad::mul(g, out.mask, mag));
  return out;
}

template <typename T>
Enhancement<T> model_forward(PhasenModel<T>& model, const dsp::AudioClip& noisy,
                             const ForwardOptions& options) {
  const dsp::ComplexSpec spec = dsp::stft(noisy);
  Graph<T> g(false);
  Enhancement<T> out;
  out.output = model.forward(g, dsp::stack_specs<T>({spec}), options);
  out.audio = dsp::istft(dsp::unstack_spec(out.output.enhanced, 0), noisy.size());
  return out;
}

template class PhasenModel<float>;
template class PhasenModel<double>;
template Enhancement<float> model_forward(PhasenModel<float>&, const dsp::AudioClip&,
                                          const ForwardOptions&);
template Enhancement<double> model_forward(PhasenModel<double>&, const dsp::AudioClip&,
                                           const ForwardOptions&);

}  // namespace phasen::model
