#include "phasen/optim/grad_suite.hpp"

#include <cmath>
#include <utility>

#include "phasen/dsp/stft.hpp"
#include "phasen/loss/loss.hpp"
#include "phasen/model/model.hpp"
#include "phasen/model/params.hpp"
#include "phasen/ndgrad/random.hpp"

namespace phasen::optim {

ndgrad::ParameterCheckReport model_gradient_check(const model::ArchConfig& arch,
                                                  const ModelGradCheckOptions& options) {
  Rng rng(options.seed);
  const auto length = static_cast<std::size_t>(std::llround(options.seconds * dsp::kSampleRate));
  dsp::AudioClip noisy{std::vector<double>(length), dsp::kSampleRate};
  dsp::AudioClip clean{std::vector<double>(length), dsp::kSampleRate};
  for (double& s : noisy.samples) s = rng.uniform(-0.5, 0.5);
  for (double& s : clean.samples) s = rng.uniform(-0.5, 0.5);

  auto params = model::ModelParams<double>::initialize(arch, options.seed);
  // Fresh init zeroes every bias and beta, which makes several branches
  // exactly scale invariant; move to a generic point first.
  const auto layout = model::param_layout(arch);
  for (const auto& spec : layout.learnable) {
    if (spec.role == model::ParamRole::kConvWeight) continue;
    for (double& v : params.at(spec.name).mutable_data()) v += rng.uniform(-0.1, 0.1);
  }
  model::PhasenModel<double> net(std::move(params));
  const ndgrad::Tensor<double> x = dsp::stack_specs<double>({dsp::stft(noisy)});
  const ndgrad::Tensor<double> ref = dsp::stack_specs<double>({dsp::stft(clean)});

  ndgrad::Graph<double> g;
  model::ForwardOptions fwd;
  fwd.training = true;
  const auto out = net.forward(g, x, fwd);
  const auto l = loss::total_loss(g, out.enhanced, ref);
  g.backward(l.total);

  ndgrad::GradCheckOptions gc;
  gc.step = options.step;
  gc.adaptive_step = true;
  gc.coords_per_tensor = options.coords_per_tensor;
  gc.seed = options.seed;
  return ndgrad::check_graph_gradients(g, l.total, net.params().learnable(), gc);
}

}  // namespace phasen::optim
