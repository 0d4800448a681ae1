#include "transnet/tensor.hpp"

#include <cmath>
#include <sstream>

namespace transnet {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("invalid shape: empty dimension list");
  for (auto d : shape) {
    if (d == 0) throw ShapeError("invalid shape " + to_string(shape) + ": zero dimension");
  }
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     to_string(shape_));
  }
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw IndexError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape_));
  }
  return shape_[axis];
}

template <typename T>
std::size_t BasicTensor<T>::flat_index(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw IndexError("index rank " + std::to_string(index.size()) + " does not match shape " +
                     to_string(shape_));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape_[axis]) throw IndexError("index out of range for shape " + to_string(shape_));
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

template <typename T>
T& BasicTensor<T>::at(std::initializer_list<std::size_t> index) {
  return data_[flat_index(index)];
}

template <typename T>
const T& BasicTensor<T>::at(std::initializer_list<std::size_t> index) const {
  return data_[flat_index(index)];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const& {
  BasicTensor copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) && {
  validate_shape(shape);
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

template <typename T>
void BasicTensor<T>::fill(T value) noexcept {
  for (auto& x : data_) x = value;
}

template <typename T>
BasicTensor<T> elementwise(ElementwiseOp op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("elementwise shape mismatch: " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  BasicTensor<T> c(a.shape());
  const std::size_t n = a.size();
  switch (op) {
    case ElementwiseOp::kAdd:
      for (std::size_t i = 0; i < n; ++i) c[i] = a[i] + b[i];
      break;
    case ElementwiseOp::kSub:
      for (std::size_t i = 0; i < n; ++i) c[i] = a[i] - b[i];
      break;
    case ElementwiseOp::kMul:
      for (std::size_t i = 0; i < n; ++i) c[i] = a[i] * b[i];
      break;
  }
  return c;
}

template <typename T>
void add_inplace(BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add_inplace shape mismatch: " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
  T* pa = a.raw();
  const T* pb = b.raw();
  for (std::size_t i = 0; i < a.size(); ++i) pa[i] += pb[i];
}

template <typename T>
BasicTensor<T> he_init(Rng& rng, const Shape& shape, std::size_t fan_in) {
  validate_shape(shape);
  if (fan_in == 0) throw ConfigError("he_init: fan_in must be >= 1");
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  BasicTensor<T> t(shape);
  for (auto& x : t.data()) x = static_cast<T>(rng.normal() * stddev);
  return t;
}

template <typename T>
bool all_finite(const BasicTensor<T>& t) noexcept {
  for (auto x : t.data()) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

#define TRANSNET_INSTANTIATE(T)                                                           \
  template class BasicTensor<T>;                                                          \
  template BasicTensor<T> elementwise(ElementwiseOp, const BasicTensor<T>&,               \
                                      const BasicTensor<T>&);                             \
  template void add_inplace(BasicTensor<T>&, const BasicTensor<T>&);                      \
  template BasicTensor<T> he_init(Rng&, const Shape&, std::size_t);                       \
  template bool all_finite(const BasicTensor<T>&) noexcept;

TRANSNET_INSTANTIATE(float)
TRANSNET_INSTANTIATE(double)

#undef TRANSNET_INSTANTIATE

}  // namespace transnet
