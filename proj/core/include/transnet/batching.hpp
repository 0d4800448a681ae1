#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <vector>

#include "transnet/tensor.hpp"

namespace transnet {

/// A fresh permutation of [0, count) drawn from rng, cut into consecutive
/// batches of batch_size (the last one may be short).
inline std::vector<std::vector<std::size_t>> shuffled_batches(Rng& rng, std::size_t count,
                                                              std::size_t batch_size) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < count; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(count, i + batch_size)));
  }
  return out;
}

/// Stacks same-shaped tensors picked by `get(index)` along a new leading axis.
template <typename Get>
Tensor stack_batch(const std::vector<std::size_t>& indices, Get&& get) {
  const Tensor& first = get(indices.front());
  Shape shape{indices.size()};
  shape.insert(shape.end(), first.shape().begin(), first.shape().end());
  Tensor out(shape);
  const std::size_t stride = first.size();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Tensor& t = get(indices[b]);
    std::copy(t.data().begin(), t.data().end(), out.raw() + b * stride);
  }
  return out;
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace transnet
