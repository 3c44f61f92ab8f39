#include "phasen/ndgrad/graph.hpp"

#include <stdexcept>
#include <unordered_set>

namespace phasen::ndgrad {

template <typename T>
bool Graph<T>::wants(std::initializer_list<const Tensor<T>*> inputs) const {
  if (!recording_) return false;
  for (const Tensor<T>* t : inputs)
    if (t && t->requires_grad()) return true;
  return false;
}

template <typename T>
void Graph<T>::record(std::string op, std::vector<Tensor<T>> inputs, Tensor<T> output,
                      std::function<void()> forward, std::function<void()> backward) {
  if (differentiated_)
    throw std::logic_error("graph: cannot record '" + op + "' after backward()");
  output.set_requires_grad(true);
  nodes_.push_back({std::move(op), std::move(inputs), std::move(output), std::move(forward),
                    std::move(backward)});
}

template <typename T>
void Graph<T>::backward(const Tensor<T>& loss) {
  if (differentiated_)
    throw std::logic_error("graph: backward() already ran on this graph; re-run forward first");
  if (loss.numel() != 1)
    throw std::invalid_argument("graph: backward() needs a scalar loss, got " +
                                shape_str(loss.shape()));
  differentiated_ = true;
  Tensor<T> seed = loss;
  seed.mutable_grad()[0] = T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward();
  }
}

template <typename T>
void Graph<T>::replay_from(std::size_t first) {
  for (std::size_t i = first; i < nodes_.size(); ++i) nodes_[i].forward();
}

template <typename T>
std::size_t Graph<T>::replay_dependents(const Tensor<T>& changed) {
  std::unordered_set<const void*> dirty{changed.id()};
  std::size_t count = 0;
  for (Node& node : nodes_) {
    bool touched = false;
    for (const Tensor<T>& in : node.inputs) {
      if (dirty.count(in.id())) {
        touched = true;
        break;
      }
    }
    if (!touched) continue;
    node.forward();
    dirty.insert(node.output.id());
    ++count;
  }
  return count;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace phasen::ndgrad
