#include "transnet/nn/layers.hpp"

namespace transnet::nn {

namespace {

void require_filled(bool filled, std::string_view kind) {
  if (!filled) {
    throw ContractError(std::string(kind) + ": backward called without a train-mode forward");
  }
}

Shape conv_out_chw(const Shape& chw, std::size_t in_channels, std::size_t out_channels,
                   std::size_t kernel, Conv2dGeometry geom) {
  if (chw.size() != 3 || chw[0] != in_channels) {
    throw ShapeError("expected [" + std::to_string(in_channels) + ",H,W], got " + to_string(chw));
  }
  return {out_channels, conv_output_size(chw[1], kernel, geom.stride, geom.pad),
          conv_output_size(chw[2], kernel, geom.stride, geom.pad)};
}

}  // namespace

// Conv2d ---------------------------------------------------------------------

template <typename T>
Conv2d<T>::Conv2d(std::string name, std::size_t in_channels, std::size_t out_channels,
                  std::size_t kernel, Conv2dGeometry geom, Rng& rng)
    : weight_(name + ".weight", he_init<T>(rng, {out_channels, in_channels, kernel, kernel},
                                           in_channels * kernel * kernel)),
      bias_(name + ".bias", BasicTensor<T>::zeros({out_channels})),
      geom_(geom) {}

template <typename T>
Shape Conv2d<T>::output_shape(const Shape& chw) const {
  const auto& w = weight_.value.shape();
  return conv_out_chw(chw, w[1], w[0], w[2], geom_);
}

template <typename T>
BasicTensor<T> Conv2d<T>::forward(const BasicTensor<T>& input) const {
  return conv2d_forward(input, weight_.value, bias_.value, geom_);
}

template <typename T>
BasicTensor<T> Conv2d<T>::forward_train(const BasicTensor<T>& input, LayerCache<T>& cache) {
  cache.saved = input;
  cache.filled = true;
  return conv2d_forward(input, weight_.value, bias_.value, geom_);
}

template <typename T>
BasicTensor<T> Conv2d<T>::backward(const LayerCache<T>& cache, const BasicTensor<T>& upstream,
                                   std::size_t group_size) {
  require_filled(cache.filled, kind());
  auto g = conv2d_backward(cache.saved, weight_.value, upstream, geom_, group_size, true);
  weight_.accumulate(g.weight);
  bias_.accumulate(g.bias);
  return std::move(g.input);
}

// DepthwiseConv2d --------------------------------------------------------------

template <typename T>
DepthwiseConv2d<T>::DepthwiseConv2d(std::string name, std::size_t channels, std::size_t kernel,
                                    Conv2dGeometry geom, Rng& rng)
    : weight_(name + ".weight", he_init<T>(rng, {channels, kernel, kernel}, kernel * kernel)),
      bias_(name + ".bias", BasicTensor<T>::zeros({channels})),
      geom_(geom) {}

template <typename T>
Shape DepthwiseConv2d<T>::output_shape(const Shape& chw) const {
  const auto& w = weight_.value.shape();
  return conv_out_chw(chw, w[0], w[0], w[1], geom_);
}

template <typename T>
BasicTensor<T> DepthwiseConv2d<T>::forward(const BasicTensor<T>& input) const {
  return depthwise_conv2d_forward(input, weight_.value, bias_.value, geom_);
}

template <typename T>
BasicTensor<T> DepthwiseConv2d<T>::forward_train(const BasicTensor<T>& input,
                                                 LayerCache<T>& cache) {
  cache.saved = input;
  cache.filled = true;
  return depthwise_conv2d_forward(input, weight_.value, bias_.value, geom_);
}

template <typename T>
BasicTensor<T> DepthwiseConv2d<T>::backward(const LayerCache<T>& cache,
                                            const BasicTensor<T>& upstream,
                                            std::size_t group_size) {
  require_filled(cache.filled, kind());
  auto g = depthwise_conv2d_backward(cache.saved, weight_.value, upstream, geom_, group_size, true);
  weight_.accumulate(g.weight);
  bias_.accumulate(g.bias);
  return std::move(g.input);
}

// BatchNorm2d -------------------------------------------------------------------

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::string name, std::size_t channels, T epsilon, T momentum)
    : gamma_(name + ".gamma", BasicTensor<T>({channels}, T{1})),
      beta_(name + ".beta", BasicTensor<T>::zeros({channels})),
      running_mean_{name + ".running_mean", BasicTensor<T>::zeros({channels})},
      running_var_{name + ".running_var", BasicTensor<T>({channels}, T{1})},
      epsilon_(epsilon),
      momentum_(momentum) {}

template <typename T>
Shape BatchNorm2d<T>::output_shape(const Shape& chw) const {
  if (chw.size() != 3 || chw[0] != gamma_.value.size()) {
    throw ShapeError("batchnorm2d: unexpected input " + to_string(chw));
  }
  return chw;
}

template <typename T>
BasicTensor<T> BatchNorm2d<T>::forward(const BasicTensor<T>& input) const {
  // eval mode never writes the running stats; the const_cast only satisfies the kernel signature
  auto& mean = const_cast<BasicTensor<T>&>(running_mean_.value);
  auto& var = const_cast<BasicTensor<T>&>(running_var_.value);
  return batchnorm_forward(input, gamma_.value, beta_.value, mean, var, Mode::kEval, epsilon_,
                           momentum_, static_cast<BatchNormCache<T>*>(nullptr));
}

template <typename T>
BasicTensor<T> BatchNorm2d<T>::forward_train(const BasicTensor<T>& input, LayerCache<T>& cache) {
  auto out = batchnorm_forward(input, gamma_.value, beta_.value, running_mean_.value,
                               running_var_.value, Mode::kTrain, epsilon_, momentum_,
                               &cache.batchnorm);
  cache.filled = true;
  return out;
}

template <typename T>
BasicTensor<T> BatchNorm2d<T>::backward(const LayerCache<T>& cache, const BasicTensor<T>& upstream,
                                        std::size_t group_size) {
  require_filled(cache.filled, kind());
  auto g = batchnorm_backward(cache.batchnorm, gamma_.value, upstream, group_size);
  gamma_.accumulate(g.gamma);
  beta_.accumulate(g.beta);
  return std::move(g.input);
}

// ReLU --------------------------------------------------------------------------

template <typename T>
BasicTensor<T> ReLU<T>::forward(const BasicTensor<T>& input) const {
  return relu_forward(input);
}

template <typename T>
BasicTensor<T> ReLU<T>::forward_train(const BasicTensor<T>& input, LayerCache<T>& cache) {
  auto out = relu_forward(input);
  cache.saved = out;
  cache.filled = true;
  return out;
}

template <typename T>
BasicTensor<T> ReLU<T>::backward(const LayerCache<T>& cache, const BasicTensor<T>& upstream,
                                 std::size_t) {
  require_filled(cache.filled, kind());
  return relu_backward(cache.saved, upstream);
}

// GlobalAvgPool -------------------------------------------------------------------

template <typename T>
BasicTensor<T> GlobalAvgPool<T>::forward(const BasicTensor<T>& input) const {
  return global_avg_pool_forward(input);
}

template <typename T>
BasicTensor<T> GlobalAvgPool<T>::forward_train(const BasicTensor<T>& input, LayerCache<T>& cache) {
  cache.input_shape = input.shape();
  cache.filled = true;
  return global_avg_pool_forward(input);
}

template <typename T>
BasicTensor<T> GlobalAvgPool<T>::backward(const LayerCache<T>& cache,
                                          const BasicTensor<T>& upstream, std::size_t) {
  require_filled(cache.filled, kind());
  return global_avg_pool_backward(cache.input_shape, upstream);
}

// UpsampleNearest2x ------------------------------------------------------------------

template <typename T>
BasicTensor<T> UpsampleNearest2x<T>::forward(const BasicTensor<T>& input) const {
  return upsample_nearest2x_forward(input);
}

template <typename T>
BasicTensor<T> UpsampleNearest2x<T>::forward_train(const BasicTensor<T>& input,
                                                   LayerCache<T>& cache) {
  cache.filled = true;
  return upsample_nearest2x_forward(input);
}

template <typename T>
BasicTensor<T> UpsampleNearest2x<T>::backward(const LayerCache<T>& cache,
                                              const BasicTensor<T>& upstream, std::size_t) {
  require_filled(cache.filled, kind());
  return upsample_nearest2x_backward(upstream);
}

// Sequential ---------------------------------------------------------------------------

template <typename T>
Sequential<T>::Sequential(const Sequential& other) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

template <typename T>
Sequential<T>& Sequential<T>::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential copy(other);
    *this = std::move(copy);
  }
  return *this;
}

template <typename T>
BasicTensor<T> Sequential<T>::forward(const BasicTensor<T>& input) const {
  BasicTensor<T> x = input;
  for (const auto& l : layers_) x = l->forward(x);
  return x;
}

template <typename T>
BasicTensor<T> Sequential<T>::forward_train(const BasicTensor<T>& input,
                                            std::vector<LayerCache<T>>& caches) {
  caches.assign(layers_.size(), LayerCache<T>{});
  BasicTensor<T> x = input;
  for (std::size_t i = 0; i < layers_.size(); ++i) x = layers_[i]->forward_train(x, caches[i]);
  return x;
}

template <typename T>
BasicTensor<T> Sequential<T>::backward(std::vector<LayerCache<T>>& caches,
                                       const BasicTensor<T>& upstream, std::size_t group_size) {
  if (caches.size() != layers_.size()) {
    throw ContractError("backward called without a matching train-mode forward");
  }
  BasicTensor<T> g = upstream;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = layers_[i]->backward(caches[i], g, group_size);
    caches[i] = LayerCache<T>{};  // release activations as soon as they are consumed
  }
  caches.clear();
  return g;
}

template <typename T>
std::vector<Param<T>*> Sequential<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& l : layers_) {
    for (auto* p : l->params()) out.push_back(p);
  }
  return out;
}

template <typename T>
std::vector<Buffer<T>*> Sequential<T>::buffers() {
  std::vector<Buffer<T>*> out;
  for (auto& l : layers_) {
    for (auto* b : l->buffers()) out.push_back(b);
  }
  return out;
}

template class Conv2d<float>;
template class Conv2d<double>;
template class DepthwiseConv2d<float>;
template class DepthwiseConv2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class ReLU<float>;
template class ReLU<double>;
template class GlobalAvgPool<float>;
template class GlobalAvgPool<double>;
template class UpsampleNearest2x<float>;
template class UpsampleNearest2x<double>;
template class Sequential<float>;
template class Sequential<double>;

}  // namespace transnet::nn
