#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "transnet/nn/ops.hpp"
#include "transnet/tensor.hpp"

namespace transnet::nn {

/// A trainable tensor with its gradient accumulator.
template <typename T>
struct Param {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;
  bool frozen = false;
  bool has_grad = false;

  Param() = default;
  Param(std::string n, BasicTensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(BasicTensor<T>::zeros(value.shape())) {}

  void accumulate(const BasicTensor<T>& g) {
    add_inplace(grad, g);
    has_grad = true;
  }
  void zero_grad() noexcept {
    grad.set_zero();
    has_grad = false;
  }
  std::size_t numel() const noexcept { return value.size(); }
};

/// Non-trainable state saved with a model (batchnorm running statistics).
template <typename T>
struct Buffer {
  std::string name;
  BasicTensor<T> value;
};

/// Forward activations a layer needs for its backward pass. Owned by the
/// caller of forward_train so that concurrent passes never share state.
template <typename T>
struct LayerCache {
  BasicTensor<T> saved;          // input or output, depending on the layer
  BatchNormCache<T> batchnorm;   // only used by BatchNorm2d
  Shape input_shape;
  bool filled = false;
};

/// Image layer over [N,C,H,W] batches.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string_view kind() const noexcept = 0;
  /// Output [C,H,W] for an input [C,H,W]; throws ShapeError/ConfigError.
  virtual Shape output_shape(const Shape& chw) const = 0;

  virtual BasicTensor<T> forward(const BasicTensor<T>& input) const = 0;
  virtual BasicTensor<T> forward_train(const BasicTensor<T>& input, LayerCache<T>& cache) = 0;
  /// Accumulates parameter gradients and returns the input gradient.
  virtual BasicTensor<T> backward(const LayerCache<T>& cache, const BasicTensor<T>& upstream,
                                  std::size_t group_size) = 0;

  virtual std::vector<Param<T>*> params() { return {}; }
  virtual std::vector<Buffer<T>*> buffers() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;
};

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         Conv2dGeometry geom, Rng& rng);

  std::string_view kind() const noexcept override { return "conv2d"; }
  Shape output_shape(const Shape& chw) const override;
  BasicTensor<T> forward(const BasicTensor<T>& input) const override;
  BasicTensor<T> forward_train(const BasicTensor<T>& input, LayerCache<T>& cache) override;
  BasicTensor<T> backward(const LayerCache<T>& cache, const BasicTensor<T>& upstream,
                          std::size_t group_size) override;
  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2d>(*this); }

  Param<T>& weight() noexcept { return weight_; }
  Param<T>& bias() noexcept { return bias_; }
  const Param<T>& weight() const noexcept { return weight_; }
  const Param<T>& bias() const noexcept { return bias_; }
  Conv2dGeometry geometry() const noexcept { return geom_; }

 private:
  Param<T> weight_;
  Param<T> bias_;
  Conv2dGeometry geom_;
};

template <typename T>
class DepthwiseConv2d final : public Layer<T> {
 public:
  DepthwiseConv2d(std::string name, std::size_t channels, std::size_t kernel, Conv2dGeometry geom,
                  Rng& rng);

  std::string_view kind() const noexcept override { return "depthwise_conv2d"; }
  Shape output_shape(const Shape& chw) const override;
  BasicTensor<T> forward(const BasicTensor<T>& input) const override;
  BasicTensor<T> forward_train(const BasicTensor<T>& input, LayerCache<T>& cache) override;
  BasicTensor<T> backward(const LayerCache<T>& cache, const BasicTensor<T>& upstream,
                          std::size_t group_size) override;
  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<DepthwiseConv2d>(*this);
  }

  Param<T>& weight() noexcept { return weight_; }
  Param<T>& bias() noexcept { return bias_; }
  const Param<T>& weight() const noexcept { return weight_; }
  const Param<T>& bias() const noexcept { return bias_; }
  Conv2dGeometry geometry() const noexcept { return geom_; }

 private:
  Param<T> weight_;
  Param<T> bias_;
  Conv2dGeometry geom_;
};

template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  static constexpr double kDefaultEpsilon = 1e-5;
  static constexpr double kDefaultMomentum = 0.1;

  BatchNorm2d(std::string name, std::size_t channels, T epsilon = T(kDefaultEpsilon),
              T momentum = T(kDefaultMomentum));

  std::string_view kind() const noexcept override { return "batchnorm2d"; }
  Shape output_shape(const Shape& chw) const override;
  BasicTensor<T> forward(const BasicTensor<T>& input) const override;
  BasicTensor<T> forward_train(const BasicTensor<T>& input, LayerCache<T>& cache) override;
  BasicTensor<T> backward(const LayerCache<T>& cache, const BasicTensor<T>& upstream,
                          std::size_t group_size) override;
  std::vector<Param<T>*> params() override { return {&gamma_, &beta_}; }
  std::vector<Buffer<T>*> buffers() override { return {&running_mean_, &running_var_}; }
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<BatchNorm2d>(*this); }

 private:
  Param<T> gamma_;
  Param<T> beta_;
  Buffer<T> running_mean_;
  Buffer<T> running_var_;
  T epsilon_;
  T momentum_;
};

template <typename T>
class ReLU final : public Layer<T> {
 public:
  std::string_view kind() const noexcept override { return "relu"; }
  Shape output_shape(const Shape& chw) const override { return chw; }
  BasicTensor<T> forward(const BasicTensor<T>& input) const override;
  BasicTensor<T> forward_train(const BasicTensor<T>& input, LayerCache<T>& cache) override;
  BasicTensor<T> backward(const LayerCache<T>& cache, const BasicTensor<T>& upstream,
                          std::size_t group_size) override;
  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<ReLU>(*this); }
};

template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  std::string_view kind() const noexcept override { return "global_avg_pool"; }
  /// Returns [C]; the only layer whose output is not an image.
  Shape output_shape(const Shape& chw) const override { return {chw.at(0)}; }
  BasicTensor<T> forward(const BasicTensor<T>& input) const override;
  BasicTensor<T> forward_train(const BasicTensor<T>& input, LayerCache<T>& cache) override;
  BasicTensor<T> backward(const LayerCache<T>& cache, const BasicTensor<T>& upstream,
                          std::size_t group_size) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<GlobalAvgPool>(*this);
  }
};

template <typename T>
class UpsampleNearest2x final : public Layer<T> {
 public:
  std::string_view kind() const noexcept override { return "upsample_nearest2x"; }
  Shape output_shape(const Shape& chw) const override {
    return {chw.at(0), 2 * chw.at(1), 2 * chw.at(2)};
  }
  BasicTensor<T> forward(const BasicTensor<T>& input) const override;
  BasicTensor<T> forward_train(const BasicTensor<T>& input, LayerCache<T>& cache) override;
  BasicTensor<T> backward(const LayerCache<T>& cache, const BasicTensor<T>& upstream,
                          std::size_t group_size) override;
  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<UpsampleNearest2x>(*this);
  }
};

/// Ordered stack of layers with value semantics (copies deep-clone layers).
template <typename T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  void push(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }
  std::size_t size() const noexcept { return layers_.size(); }
  Layer<T>& operator[](std::size_t i) { return *layers_[i]; }
  const Layer<T>& operator[](std::size_t i) const { return *layers_[i]; }

  BasicTensor<T> forward(const BasicTensor<T>& input) const;
  BasicTensor<T> forward_train(const BasicTensor<T>& input, std::vector<LayerCache<T>>& caches);
  BasicTensor<T> backward(std::vector<LayerCache<T>>& caches, const BasicTensor<T>& upstream,
                          std::size_t group_size);

  std::vector<Param<T>*> params();
  std::vector<Buffer<T>*> buffers();

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

}  // namespace transnet::nn
