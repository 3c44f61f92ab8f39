#include "phasen/ndgrad/grad_check.hpp"

#include "phasen/ndgrad/branch_trace.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <random>
#include <stdexcept>

namespace phasen::ndgrad {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

namespace {

void note(GradCheckResult& r, std::size_t index, double analytic, double numeric) {
  const double err = relative_error(analytic, numeric);
  ++r.checked;
  if (err > r.max_rel_error || r.checked == 1) {
    r.max_rel_error = std::max(r.max_rel_error, err);
    r.worst_index = index;
    r.worst_analytic = analytic;
    r.worst_numeric = numeric;
  }
}

// Lazy Fisher-Yates over [0, n): each draw is a fresh index without repeats.
class CoordDraw {
 public:
  CoordDraw(std::size_t n, std::mt19937_64& rng) : idx_(n), rng_(rng) {
    std::iota(idx_.begin(), idx_.end(), std::size_t{0});
  }
  bool done() const { return next_ == idx_.size(); }
  std::size_t take() {
    const std::size_t j = next_ + static_cast<std::size_t>(rng_() % (idx_.size() - next_));
    std::swap(idx_[next_], idx_[j]);
    return idx_[next_++];
  }

 private:
  std::vector<std::size_t> idx_;
  std::mt19937_64& rng_;
  std::size_t next_ = 0;
};

// Central difference of `eval` around values[i]; nullopt when the two sides
// took different branches.
template <typename T, typename Eval>
std::optional<double> central_difference(std::span<T> values, std::size_t i, double h,
                                         Eval&& eval) {
  const T saved = values[i];
  values[i] = static_cast<T>(saved + h);
  double up = 0.0, down = 0.0;
  std::uint64_t up_branches = 0, down_branches = 0;
  {
    BranchTrace trace;
    up = eval();
    up_branches = trace.digest();
  }
  values[i] = static_cast<T>(saved - h);
  {
    BranchTrace trace;
    down = eval();
    down_branches = trace.digest();
  }
  values[i] = saved;
  if (up_branches != down_branches) return std::nullopt;
  return (up - down) / (2.0 * h);
}

// Round-off in f, in units of |f| * epsilon, assumed when judging whether a
// difference quotient is resolved.
constexpr double kNoiseUlps = 1.0;
constexpr double kNoiseShare = 2e-5;

template <typename T, typename Eval>
std::optional<double> adaptive_difference(std::span<T> values, std::size_t i, double h,
                                          double scale, Eval&& eval) {
  const double floor = kNoiseUlps * std::numeric_limits<double>::epsilon() * std::abs(scale);
  const double ladder[] = {h / 100.0, h / 10.0, h, h * 10.0, h * 100.0};
  constexpr std::size_t kStart = 2;
  auto resolved = [&](double d, double step) {
    return std::abs(d) * step * kNoiseShare >= floor;
  };
  std::size_t k = kStart;
  std::optional<double> best;
  for (;;) {
    const auto d = central_difference(values, i, ladder[k], eval);
    if (!d) {
      if (best || k == 0) return best;
      --k;
      continue;
    }
    if (k < kStart || k + 1 == std::size(ladder) || resolved(*d, ladder[k])) return d;
    best = d;
    ++k;
  }
}

template <typename T, typename Eval>
void check_tensor(std::span<T> values, const std::vector<T>& analytic,
                  const GradCheckOptions& options, double scale, std::mt19937_64& rng,
                  Eval&& eval, GradCheckResult& result) {
  const std::size_t wanted = options.coords_per_tensor == 0
                                 ? values.size()
                                 : std::min(options.coords_per_tensor, values.size());
  CoordDraw draw(values.size(), rng);
  while (result.checked < wanted && !draw.done()) {
    const std::size_t i = draw.take();
    if (options.exclude && options.exclude(i, static_cast<double>(values[i]))) {
      ++result.excluded;
      continue;
    }
    const auto numeric = options.adaptive_step
                             ? adaptive_difference(values, i, options.step, scale, eval)
                             : central_difference(values, i, options.step, eval);
    if (!numeric) {
      ++result.straddled;
      continue;
    }
    note(result, i, static_cast<double>(analytic[i]), *numeric);
  }
}

}  // namespace

template <typename T>
GradCheckResult grad_check(const std::function<Tensor<T>(Graph<T>&, const Tensor<T>&)>& f,
                           const Tensor<T>& x, const GradCheckOptions& options) {
  Tensor<T> probe = x.clone();
  probe.set_requires_grad(true);
  Graph<T> graph;
  const Tensor<T> loss = f(graph, probe);
  graph.backward(loss);
  const std::vector<T> analytic(probe.grad().begin(), probe.grad().end());
  if (analytic.empty()) throw std::runtime_error("grad_check: f does not depend on x");

  auto eval = [&](const Tensor<T>& at) {
    Graph<T> g(false);
    return static_cast<double>(f(g, at).item());
  };
  const double base = eval(probe);
  if (base != static_cast<double>(loss.item()) || eval(probe) != base)
    throw std::runtime_error("grad_check: f is non-deterministic (repeated evaluations differ)");

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  check_tensor(probe.mutable_data(), analytic, options, base, rng, [&] { return eval(probe); }, result);
  return result;
}

template <typename T>
ParameterCheckReport check_graph_gradients(
    Graph<T>& graph, const Tensor<T>& loss,
    const std::vector<std::pair<std::string, Tensor<T>>>& tensors,
    const GradCheckOptions& options) {
  const double base = static_cast<double>(loss.item());
  graph.replay_from(0);
  if (static_cast<double>(loss.item()) != base)
    throw std::runtime_error("check_graph_gradients: replaying the graph changed the loss");

  std::mt19937_64 rng(options.seed);
  ParameterCheckReport report;
  for (const auto& [name, tensor] : tensors) {
    Tensor<T> param = tensor;
    TensorCheck check{name, {}};
    const std::vector<T> analytic = param.has_grad()
                                        ? std::vector<T>(param.grad().begin(), param.grad().end())
                                        : std::vector<T>(param.numel(), T(0));
    check_tensor(param.mutable_data(), analytic, options, base, rng,
                 [&] {
                   graph.replay_dependents(param);
                   return static_cast<double>(loss.item());
                 },
                 check.result);
    graph.replay_dependents(param);
    report.max_rel_error = std::max(report.max_rel_error, check.result.max_rel_error);
    report.checked += check.result.checked;
    report.straddled += check.result.straddled;
    report.tensors.push_back(std::move(check));
  }
  return report;
}

template GradCheckResult grad_check<float>(
    const std::function<Tensor<float>(Graph<float>&, const Tensor<float>&)>&,
    const Tensor<float>&, const GradCheckOptions&);
template GradCheckResult grad_check<double>(
    const std::function<Tensor<double>(Graph<double>&, const Tensor<double>&)>&,
    const Tensor<double>&, const GradCheckOptions&);
template ParameterCheckReport check_graph_gradients<float>(
    Graph<float>&, const Tensor<float>&, const std::vector<std::pair<std::string, Tensor<float>>>&,
    const GradCheckOptions&);
template ParameterCheckReport check_graph_gradients<double>(
    Graph<double>&, const Tensor<double>&,
    const std::vector<std::pair<std::string, Tensor<double>>>&, const GradCheckOptions&);

}  // namespace phasen::ndgrad
