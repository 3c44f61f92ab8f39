#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "phasen/ndgrad/graph.hpp"
#include "phasen/ndgrad/tensor.hpp"

namespace phasen::ndgrad {

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates checked per tensor; 0 checks every element.
  std::size_t coords_per_tensor = 0;
  std::uint64_t seed = 0;
  /// Per coordinate, walk the step over {h/100, h/10, h, 10h, 100h}: down when the
  /// two sides straddle a kink, up while the difference is too small to rise
  /// above round-off in f.
  bool adaptive_step = false;
  /// Elements for which this returns true are skipped (e.g. kinks).
  std::function<bool(std::size_t index, double value)> exclude;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
  /// Draws rejected because x+h and x-h took different branches of a
  /// non-differentiable op; a replacement coordinate is drawn instead.
  std::size_t straddled = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Compares the reverse-mode gradient of f at x against central differences
/// (f(x+h) - f(x-h)) / 2h. Coordinates whose two evaluations straddle a kink
/// (see BranchTrace) are replaced by fresh random draws. `f` must build its value on the graph it is given.
/// Throws std::runtime_error if two evaluations of f at x disagree.
template <typename T>
GradCheckResult grad_check(const std::function<Tensor<T>(Graph<T>&, const Tensor<T>&)>& f,
                           const Tensor<T>& x, const GradCheckOptions& options = {});

struct TensorCheck {
  std::string name;
  GradCheckResult result;
};

struct ParameterCheckReport {
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t straddled = 0;
};

/// Finite-difference check of every named tensor's gradient on an already
/// differentiated graph. Each perturbation re-evaluates only the taped nodes
/// downstream of that tensor.
template <typename T>
ParameterCheckReport check_graph_gradients(
    Graph<T>& graph, const Tensor<T>& loss,
    const std::vector<std::pair<std::string, Tensor<T>>>& tensors,
    const GradCheckOptions& options = {});

}  // namespace phasen::ndgrad
