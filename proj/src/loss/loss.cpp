#include "phasen/loss/loss.hpp"

#include <stdexcept>

#include "phasen/ndgrad/ops.hpp"

namespace phasen::loss {

using ndgrad::Graph;
using ndgrad::Tensor;

namespace {

template <typename T>
void check_pair(const char* op, const Tensor<T>& est, const Tensor<T>& ref) {
  if (est.shape() != ref.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                ndgrad::shape_str(est.shape()) + " vs " +
                                ndgrad::shape_str(ref.shape()));
  if (est.rank() != 4 || est.dim(1) != 2)
    throw std::invalid_argument(std::string(op) + ": expected [B, 2, F, T], got " +
                                ndgrad::shape_str(est.shape()));
}

template <typename T>
Tensor<T> compressed_magnitude(Graph<T>& g, const Tensor<T>& spec) {
  return ndgrad::power_law(g, ndgrad::magnitude(g, spec), dsp::kCompressionPower);
}

template <typename T>
Tensor<T> compressed_spec(Graph<T>& g, const Tensor<T>& spec) {
  return ndgrad::mul_channels(g, ndgrad::unit_normalize(g, spec), compressed_magnitude(g, spec));
}

}  // namespace

template <typename T>
Tensor<T> amplitude_loss(Graph<T>& g, const Tensor<T>& est, const Tensor<T>& ref) {
  check_pair("amplitude_loss", est, ref);
  return ndgrad::mse(g, compressed_magnitude(g, est), compressed_magnitude(g, ref));
}

template <typename T>
Tensor<T> phase_aware_loss(Graph<T>& g, const Tensor<T>& est, const Tensor<T>& ref) {
  check_pair("phase_aware_loss", est, ref);
  return ndgrad::mse(g, compressed_spec(g, est), compressed_spec(g, ref));
}

template <typename T>
LossValue<T> total_loss(Graph<T>& g, const Tensor<T>& est, const Tensor<T>& ref) {
  LossValue<T> out;
  out.amp = amplitude_loss(g, est, ref);
  out.phase = phase_aware_loss(g, est, ref);
  out.total = ndgrad::scale(g, ndgrad::add(g, out.amp, out.phase), T(0.5));
  return out;
}

LossScalars evaluate_loss(const dsp::ComplexSpec& est, const dsp::ComplexSpec& ref) {
  Graph<double> g(false);
  const Tensor<double> e = dsp::stack_specs<double>({est});
  const Tensor<double> r = dsp::stack_specs<double>({ref});
  const LossValue<double> v = total_loss(g, e, r);
  return {v.total.item(), v.amp.item(), v.phase.item()};
}

template Tensor<float> amplitude_loss(Graph<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> amplitude_loss(Graph<double>&, const Tensor<double>&,
                                       const Tensor<double>&);
template Tensor<float> phase_aware_loss(Graph<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> phase_aware_loss(Graph<double>&, const Tensor<double>&,
                                         const Tensor<double>&);
template LossValue<float> total_loss(Graph<float>&, const Tensor<float>&, const Tensor<float>&);
template LossValue<double> total_loss(Graph<double>&, const Tensor<double>&,
                                      const Tensor<double>&);

}  // namespace phasen::loss
