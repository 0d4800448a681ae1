#pragma once

#include <cstddef>
#include <vector>

#include "transnet/tensor.hpp"

// Stateless forward/backward kernels. Image operands are [C,H,W] or
// batched [N,C,H,W]; the output keeps the input's rank.
//
// Backward kernels that produce parameter gradients take a `group_size`:
// consecutive runs of `group_size` samples are reduced into one partial sum
// and partials are added in group order (0 = the whole batch is one group).
// TransNet uses frames-per-clip as the group so gradient reduction happens
// clip by clip.

namespace transnet::nn {

enum class Mode { kTrain, kEval };

struct Conv2dGeometry {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

/// floor((in + 2*pad - kernel) / stride) + 1; ShapeError when the kernel
/// does not fit the padded input.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                             std::size_t pad);

template <typename T>
struct Conv2dGrads {
  BasicTensor<T> input;   // null when not requested
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

/// Standard convolution, weights [C_out,C_in,kH,kW], bias [C_out], zero padding.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                              const BasicTensor<T>& bias, Conv2dGeometry geom);

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                               const BasicTensor<T>& upstream, Conv2dGeometry geom,
                               std::size_t group_size = 0, bool need_input_grad = true);

/// Per-channel convolution, weights [C,kH,kW], bias [C].
template <typename T>
BasicTensor<T> depthwise_conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights,
                                        const BasicTensor<T>& bias, Conv2dGeometry geom);

template <typename T>
Conv2dGrads<T> depthwise_conv2d_backward(const BasicTensor<T>& input,
                                         const BasicTensor<T>& weights,
                                         const BasicTensor<T>& upstream, Conv2dGeometry geom,
                                         std::size_t group_size = 0,
                                         bool need_input_grad = true);

template <typename T>
struct BatchNormCache {
  BasicTensor<T> normalized;   // x-hat, same shape as input
  std::vector<T> inv_std;      // per channel
};

template <typename T>
struct BatchNormGrads {
  BasicTensor<T> input;
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
};

/// Batch normalization over (batch x spatial) per channel of a [N,C,H,W]
/// tensor. Train mode normalizes with biased batch variance and updates the
/// running stats as running = (1-momentum)*running + momentum*batch (the
/// running variance uses the unbiased estimate). Eval mode uses the running
/// stats. DegenerateBatchError when train mode sees fewer than 2 values per
/// channel.
template <typename T>
BasicTensor<T> batchnorm_forward(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                                 const BasicTensor<T>& beta, BasicTensor<T>& running_mean,
                                 BasicTensor<T>& running_var, Mode mode, T epsilon, T momentum,
                                 BatchNormCache<T>* cache);

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const BasicTensor<T>& gamma,
                                     const BasicTensor<T>& upstream, std::size_t group_size = 0);

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input);

/// Passes upstream where the forward output is > 0 (equivalently input > 0);
/// the subgradient at exactly 0 is 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& output, const BasicTensor<T>& upstream);

/// [C,H,W] -> [C] or [N,C,H,W] -> [N,C].
template <typename T>
BasicTensor<T> global_avg_pool_forward(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> global_avg_pool_backward(const Shape& input_shape, const BasicTensor<T>& upstream);

/// Valid, stride-1 temporal convolution: seq [T,L], kernels [K,s,L], bias [K]
/// -> [T-s+1, K] with out[i,j] = bias[j] + sum_k sum_l seq[i+k,l]*kernels[j,k,l].
template <typename T>
BasicTensor<T> conv1d_forward(const BasicTensor<T>& seq, const BasicTensor<T>& kernels,
                              const BasicTensor<T>& bias);

template <typename T>
struct Conv1dGrads {
  BasicTensor<T> input;
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

template <typename T>
Conv1dGrads<T> conv1d_backward(const BasicTensor<T>& seq, const BasicTensor<T>& kernels,
                               const BasicTensor<T>& upstream);

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

template <typename T>
struct SoftmaxCrossEntropy {
  BasicTensor<T> probs;
  T loss;
};

/// Stable softmax + negative log-likelihood of `label`. The logit gradient is
/// probs - onehot(label), see softmax_cross_entropy_backward.
template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::size_t label);

template <typename T>
BasicTensor<T> softmax_cross_entropy_backward(const BasicTensor<T>& probs, std::size_t label);

template <typename T>
struct SigmoidBce {
  BasicTensor<T> probs;
  T loss;   // mean over all elements
};

/// Per-element sigmoid + binary cross-entropy in the log-sum-exp form
/// max(x,0) - x*t + log1p(exp(-|x|)). DomainError if a target leaves [0,1].
template <typename T>
SigmoidBce<T> sigmoid_bce(const BasicTensor<T>& logits, const BasicTensor<T>& targets);

/// Gradient of the mean loss: (sigmoid(x) - t) / numel.
template <typename T>
BasicTensor<T> sigmoid_bce_backward(const BasicTensor<T>& probs, const BasicTensor<T>& targets);

template <typename T>
BasicTensor<T> upsample_nearest2x_forward(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> upsample_nearest2x_backward(const BasicTensor<T>& upstream);

}  // namespace transnet::nn
