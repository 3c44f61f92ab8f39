#include "phasen/model/params.hpp"

#include <cmath>
#include <stdexcept>

#include "phasen/ndgrad/random.hpp"

namespace phasen::model {

using ndgrad::Shape;
using ndgrad::Tensor;

namespace {

class LayoutBuilder {
 public:
  explicit LayoutBuilder(const ArchConfig& c) : c_(c) {}

  void conv(const std::string& name, std::size_t cout, std::size_t cin, Kernel k) {
    const std::size_t fan_in = cin * k.freq * k.time;
    out_.learnable.push_back(
        {name + ".weight", {cout, cin, k.freq, k.time}, ParamRole::kConvWeight, fan_in});
    out_.learnable.push_back({name + ".bias", {cout}, ParamRole::kBias, fan_in});
  }

  void norm(const std::string& name, std::size_t channels) {
    out_.learnable.push_back({name + ".gamma", {channels}, ParamRole::kGamma});
    out_.learnable.push_back({name + ".beta", {channels}, ParamRole::kBeta});
    if (c_.norm == NormKind::kBatch) {
      out_.buffers.push_back({name + ".running_mean", {channels}, ParamRole::kRunningMean});
      out_.buffers.push_back({name + ".running_var", {channels}, ParamRole::kRunningVar});
    }
  }

  void act(const std::string& name, std::size_t channels) {
    if (c_.act == ActKind::kPrelu)
      out_.learnable.push_back({name + ".slope", {channels}, ParamRole::kSlope});
  }

  void phase_act(const std::string& name, std::size_t channels) {
    if (c_.phase_act == PhaseAct::kPrelu)
      out_.learnable.push_back({name + ".slope", {channels}, ParamRole::kSlope});
  }

  // conv + norm + act sharing one stem, e.g. "x.fc0" -> x.fc0, x.fc0_norm, x.fc0_act.
  void block(const std::string& stem, std::size_t cout, std::size_t cin, Kernel k) {
    conv(stem, cout, cin, k);
    norm(stem + "_norm", cout);
    act(stem + "_act", cout);
  }

  ParamLayout take() { return std::move(out_); }

 private:
  const ArchConfig& c_;
  ParamLayout out_;
};

void build_spa(LayoutBuilder& b, const ArchConfig& c, const std::string& p) {
  const std::size_t mid = c.spa_mid_channels;
  const std::size_t f = c.freq_bins;
  b.conv(p + "channel_conv", mid, c.amp_channels, {1, 1});
  b.norm(p + "channel_norm", mid);
  b.act(p + "channel_act", mid);
  b.conv(p + "freq_conv", f, f, {1, 1});
  b.norm(p + "freq_norm", f);
  b.act(p + "freq_act", f);
  b.conv(p + "time_conv", 1, mid, {1, c.spa_time_kernel});
  b.norm(p + "time_norm", 1);
  b.act(p + "time_act", 1);
}

double init_value(const ParamSpec& spec, Rng& rng) {
  switch (spec.role) {
    case ParamRole::kConvWeight: {
      const double bound = std::sqrt(6.0 / static_cast<double>(spec.fan_in));
      return rng.uniform(-bound, bound);
    }
    case ParamRole::kGamma:
    case ParamRole::kRunningVar:
      return 1.0;
    case ParamRole::kSlope:
      return 0.25;
    default:
      return 0.0;
  }
}

template <typename T>
void check_entries(const char* what, const std::vector<ParamSpec>& specs,
                   const std::vector<std::pair<std::string, Tensor<T>>>& entries) {
  if (specs.size() != entries.size())
    throw std::invalid_argument(std::string("model params: expected ") +
                                std::to_string(specs.size()) + " " + what + " tensors, got " +
                                std::to_string(entries.size()));
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& [name, t] = entries[i];
    if (name != specs[i].name)
      throw std::invalid_argument("model params: expected '" + specs[i].name + "' at position " +
                                  std::to_string(i) + ", got '" + name + "'");
    if (!t.defined() || t.shape() != specs[i].shape)
      throw std::invalid_argument("model params: '" + name + "' must have shape " +
                                  ndgrad::shape_str(specs[i].shape) + ", got " +
                                  (t.defined() ? ndgrad::shape_str(t.shape()) : "undefined"));
  }
}

template <typename T>
const Tensor<T>* find(const std::vector<std::pair<std::string, Tensor<T>>>& entries,
                      std::string_view name) {
  for (const auto& [n, t] : entries)
    if (n == name) return &t;
  return nullptr;
}

}  // namespace

ParamLayout param_layout(const ArchConfig& c) {
  c.validate();
  LayoutBuilder b(c);
  const std::size_t a = c.amp_channels;
  const std::size_t ph = c.phase_channels;

  b.block("prevnet.amp_conv0", a, 2, kPrevAmpKernels[0]);
  b.block("prevnet.amp_conv1", a, a, kPrevAmpKernels[1]);
  b.conv("prevnet.phase_conv0", ph, 2, kPrevPhaseKernels[0]);
  b.phase_act("prevnet.phase_conv0_act", ph);
  b.conv("prevnet.phase_conv1", ph, ph, kPrevPhaseKernels[1]);
  b.phase_act("prevnet.phase_conv1_act", ph);

  for (std::size_t i = 0; i < c.num_tsb; ++i) {
    const std::string p = "tsb." + std::to_string(i) + ".";
    build_spa(b, c, p + "spa.0.");
    for (std::size_t k = 0; k < 3; ++k)
      b.block(p + "amp_conv" + std::to_string(k), a, a, kTsbAmpKernels[k]);
    build_spa(b, c, p + "spa.1.");
    b.conv(p + "phase_conv", ph, ph, kTsbPhaseKernel);
    b.phase_act(p + "phase_conv_act", ph);
    b.conv(p + "phase_to_amp", a, ph, {1, 1});
    b.conv(p + "amp_to_phase", ph, a, {1, 1});
  }

  const std::size_t narrow = c.postnet_narrow_channels;
  const std::size_t width = c.postnet_conv_filters;
  b.block("postnet.narrow_conv", narrow, a, {1, 1});
  b.block("postnet.frame_conv", width, narrow * c.freq_bins, {1, 1});
  for (std::size_t k = 0; k + 1 < kPostnetFcLayers; ++k)
    b.block("postnet.fc" + std::to_string(k), width, width, {1, 1});
  b.conv("postnet.fc" + std::to_string(kPostnetFcLayers - 1), c.freq_bins, width, {1, 1});
  b.conv("postnet.phase_conv", 2, ph, {1, 1});
  return b.take();
}

template <typename T>
ModelParams<T>::ModelParams(ArchConfig config, std::vector<Entry> learnable,
                            std::vector<Entry> buffers)
    : config_(config), learnable_(std::move(learnable)), buffers_(std::move(buffers)) {
  const ParamLayout layout = param_layout(config_);
  check_entries("learnable", layout.learnable, learnable_);
  check_entries("buffer", layout.buffers, buffers_);
  for (auto& [name, t] : learnable_) t.set_requires_grad(true);
}

template <typename T>
ModelParams<T> ModelParams<T>::initialize(const ArchConfig& config, std::uint64_t seed) {
  const ParamLayout layout = param_layout(config);
  Rng rng(seed);
  auto make = [&rng](const std::vector<ParamSpec>& specs) {
    std::vector<Entry> out;
    out.reserve(specs.size());
    for (const auto& spec : specs) {
      Tensor<T> t(spec.shape);
      for (T& v : t.mutable_data()) v = static_cast<T>(init_value(spec, rng));
      out.emplace_back(spec.name, std::move(t));
    }
    return out;
  };
  auto learnable = make(layout.learnable);
  auto buffers = make(layout.buffers);
  return ModelParams(config, std::move(learnable), std::move(buffers));
}

template <typename T>
const Tensor<T>& ModelParams<T>::at(std::string_view name) const {
  if (const auto* t = find(learnable_, name)) return *t;
  throw std::out_of_range("model params: no learnable tensor '" + std::string(name) + "'");
}

template <typename T>
const Tensor<T>& ModelParams<T>::buffer(std::string_view name) const {
  if (const auto* t = find(buffers_, name)) return *t;
  throw std::out_of_range("model params: no buffer '" + std::string(name) + "'");
}

template <typename T>
bool ModelParams<T>::contains(std::string_view name) const {
  return find(learnable_, name) != nullptr;
}

template <typename T>
std::size_t ModelParams<T>::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : learnable_) n += t.numel();
  return n;
}

template <typename T>
void ModelParams<T>::zero_grad() const {
  for (const auto& [name, t] : learnable_) t.zero_grad();
}

template <typename T>
ModelParams<T> ModelParams<T>::clone() const {
  auto copy = [](const std::vector<Entry>& in) {
    std::vector<Entry> out;
    out.reserve(in.size());
    for (const auto& [name, t] : in) out.emplace_back(name, t.clone());
    return out;
  };
  return ModelParams(config_, copy(learnable_), copy(buffers_));
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  using Out = typename ModelParams<U>::Entry;
  auto convert = [](const std::vector<Entry>& in) {
    std::vector<Out> out;
    out.reserve(in.size());
    for (const auto& [name, t] : in) {
      Tensor<U> u(t.shape());
      auto dst = u.mutable_data();
      auto src = t.data();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<U>(src[i]);
      out.emplace_back(name, std::move(u));
    }
    return out;
  };
  return ModelParams<U>(config_, convert(learnable_), convert(buffers_));
}

bool path_has_prefix(std::string_view name, std::string_view prefix) {
  if (prefix.empty()) return true;
  if (!name.starts_with(prefix)) return false;
  return name.size() == prefix.size() || name[prefix.size()] == '.';
}

std::string block_of(std::string_view name) {
  const auto dot = name.find('.');
  const std::string_view head = name.substr(0, dot);
  if (head == "tsb" && dot != std::string_view::npos) {
    const auto next = name.find('.', dot + 1);
    return std::string(name.substr(0, next));
  }
  return std::string(head);
}

namespace {

template <typename Items, typename NameOf, typename SizeOf>
ParamCount tally(const Items& items, std::string_view prefix, NameOf name_of, SizeOf size_of) {
  ParamCount out;
  bool matched = false;
  for (const auto& item : items) {
    const std::string_view name = name_of(item);
    if (!path_has_prefix(name, prefix)) continue;
    matched = true;
    const std::size_t n = size_of(item);
    out.total += n;
    const std::string block = block_of(name);
    if (out.blocks.empty() || out.blocks.back().first != block) out.blocks.emplace_back(block, 0);
    out.blocks.back().second += n;
  }
  if (!matched)
    throw std::invalid_argument("count_params: no parameters under prefix '" +
                                std::string(prefix) + "'");
  return out;
}

}  // namespace

ParamCount count_params(const ArchConfig& config, std::string_view prefix) {
  const ParamLayout layout = param_layout(config);
  return tally(
      layout.learnable, prefix, [](const ParamSpec& s) -> std::string_view { return s.name; },
      [](const ParamSpec& s) { return ndgrad::shape_numel(s.shape); });
}

template <typename T>
ParamCount count_params(const ModelParams<T>& params, std::string_view prefix) {
  using Entry = typename ModelParams<T>::Entry;
  return tally(
      params.learnable(), prefix, [](const Entry& e) -> std::string_view { return e.first; },
      [](const Entry& e) { return e.second.numel(); });
}

template class ModelParams<float>;
template class ModelParams<double>;
template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<float> ModelParams<float>::cast<float>() const;
template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;
template ParamCount count_params(const ModelParams<float>&, std::string_view);
template ParamCount count_params(const ModelParams<double>&, std::string_view);

}  // namespace phasen::model
