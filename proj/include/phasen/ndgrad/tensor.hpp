#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace phasen::ndgrad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major array with an optional gradient buffer.
///
/// Tensor is a shared handle: copies alias the same storage, which is how
/// parameters, graph nodes and optimizers see one buffer. Use clone() for a
/// deep copy.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const T> data() const;
  std::span<T> mutable_data() const;
  T item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value) const;

  bool has_grad() const;
  /// Empty span when no gradient has been accumulated.
  std::span<const T> grad() const;
  /// Allocates a zero gradient on first use.
  std::span<T> mutable_grad() const;
  void zero_grad() const;
  void clear_grad() const;

  Tensor clone() const;

  /// Stable identity of the underlying storage (graph bookkeeping).
  const void* id() const { return impl_.get(); }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

/// Throws std::runtime_error naming `op` if any element is NaN or infinite.
template <typename T>
void require_finite(const char* op, std::span<const T> values);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace phasen::ndgrad
