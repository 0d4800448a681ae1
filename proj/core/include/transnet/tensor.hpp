#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "transnet/error.hpp"
#include "transnet/rng.hpp"

namespace transnet {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);
/// Throws ShapeError unless `shape` is non-empty with every dimension >= 1.
void validate_shape(const Shape& shape);

/// Dense row-major array. Images are [C,H,W], image batches [N,C,H,W],
/// sequences [T,L]. A default-constructed tensor is the null tensor
/// (rank 0, no storage) and is only used as an "unset" marker.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{0});
  BasicTensor(Shape shape, std::vector<T> data);

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape), T{0}); }
  static BasicTensor zeros_like(const BasicTensor& other) { return zeros(other.shape()); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }
  const std::vector<T>& vec() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Bounds-checked multi-index access; slow, meant for tests and tools.
  T& at(std::initializer_list<std::size_t> index);
  const T& at(std::initializer_list<std::size_t> index) const;

  BasicTensor reshaped(Shape shape) const&;
  BasicTensor reshaped(Shape shape) &&;

  void fill(T value) noexcept;
  void set_zero() noexcept { fill(T{0}); }

  /// Element-by-element equality of shape and data (bit-level for finite values).
  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t flat_index(std::initializer_list<std::size_t> index) const;

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

template <typename T>
BasicTensor<T> tensor_new(const Shape& shape, T fill) {
  validate_shape(shape);
  return BasicTensor<T>(shape, fill);
}

enum class ElementwiseOp { kAdd, kSub, kMul };

/// c[i] = op(a[i], b[i]); shapes must match exactly (no broadcasting).
template <typename T>
BasicTensor<T> elementwise(ElementwiseOp op, const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::kAdd, a, b);
}
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::kSub, a, b);
}
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return elementwise(ElementwiseOp::kMul, a, b);
}

/// In-place a += b, the one mutating arithmetic used by gradient accumulation.
template <typename T>
void add_inplace(BasicTensor<T>& a, const BasicTensor<T>& b);

/// He-normal initialization: i.i.d. N(0, 2/fan_in) drawn from `rng`.
template <typename T>
BasicTensor<T> he_init(Rng& rng, const Shape& shape, std::size_t fan_in);

template <typename U, typename T>
BasicTensor<U> tensor_cast(const BasicTensor<T>& t) {
  if (t.rank() == 0) return {};
  std::vector<U> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<U>(t[i]);
  return BasicTensor<U>(t.shape(), std::move(out));
}

template <typename T>
bool all_finite(const BasicTensor<T>& t) noexcept;

}  // namespace transnet
