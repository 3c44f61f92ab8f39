#include "phasen/optim/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace phasen::optim {

template <typename T>
AdamState<T>::AdamState(const NamedTensors<T>& params) {
  for (const auto& [name, t] : params) {
    m.emplace_back(name, ndgrad::Tensor<T>::full(t.shape(), T(0)));
    v.emplace_back(name, ndgrad::Tensor<T>::full(t.shape(), T(0)));
  }
}

template <typename T>
void adam_step(AdamState<T>& state, const NamedTensors<T>& params, double lr,
               const AdamConfig& config) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("adam: state tracks " + std::to_string(state.m.size()) +
                                " tensors, got " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, p] = params[i];
    if (state.m[i].first != name || state.m[i].second.shape() != p.shape())
      throw std::invalid_argument("adam: state does not match parameter '" + name + "'");
    for (T g : p.grad())
      if (!std::isfinite(g))
        throw std::runtime_error("adam: non-finite gradient in parameter '" + name + "'");
  }

  const auto t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const T step_size = static_cast<T>(lr / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(config.eps);

  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i].second;
    auto x = p.mutable_data();
    auto m = state.m[i].second.mutable_data();
    auto v = state.v[i].second.mutable_data();
    const auto grad = p.grad();
    for (std::size_t k = 0; k < x.size(); ++k) {
      const T g = grad.empty() ? T(0) : grad[k];
      m[k] = b1 * m[k] + (T(1) - b1) * g;
      v[k] = b2 * v[k] + (T(1) - b2) * g * g;
      x[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_c2 + eps);
    }
  }
  ++state.step;
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(AdamState<float>&, const NamedTensors<float>&, double, const AdamConfig&);
template void adam_step(AdamState<double>&, const NamedTensors<double>&, double,
                        const AdamConfig&);

}  // namespace phasen::optim
