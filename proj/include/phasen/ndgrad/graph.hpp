#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "phasen/ndgrad/tensor.hpp"

namespace phasen::ndgrad {

/// Tape of executed ops in execution order. Each entry keeps a forward
/// closure (so the tape can be re-evaluated after an input is perturbed) and
/// a backward closure that accumulates into input gradients.
template <typename T>
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  bool recording() const { return recording_; }

  /// True when an op over these inputs must be taped.
  bool wants(std::initializer_list<const Tensor<T>*> inputs) const;

  void record(std::string op, std::vector<Tensor<T>> inputs, Tensor<T> output,
              std::function<void()> forward, std::function<void()> backward);

  /// Seeds d(loss)/d(loss) = 1 and runs every backward closure in reverse
  /// order. A graph can be differentiated once.
  void backward(const Tensor<T>& loss);

  std::size_t size() const { return nodes_.size(); }
  const std::string& op_name(std::size_t i) const { return nodes_.at(i).op; }

  /// Re-evaluates every node from index `first` onwards.
  void replay_from(std::size_t first);

  /// Re-evaluates only the nodes that transitively read `changed`.
  /// Returns the number of nodes recomputed.
  std::size_t replay_dependents(const Tensor<T>& changed);

 private:
  struct Node {
    std::string op;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    std::function<void()> forward;
    std::function<void()> backward;
  };

  std::vector<Node> nodes_;
  bool recording_ = true;
  bool differentiated_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace phasen::ndgrad
