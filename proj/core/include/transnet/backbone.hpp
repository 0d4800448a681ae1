#pragma once

#include <cstddef>
#include <vector>

#include "transnet/nn/layers.hpp"

namespace transnet {

struct BlockSpec {
  std::size_t filters = 0;
  std::size_t stride = 1;
  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

/// MobileNetV1-style encoder: 3x3 stride-2 stem, then depthwise-separable
/// blocks, then global average pooling to a latent vector of size
/// latent_dim() (the last block's filter count).
struct BackboneConfig {
  std::size_t input_height = 32;
  std::size_t input_width = 32;
  std::size_t input_channels = 3;
  std::size_t stem_filters = 8;
  std::vector<BlockSpec> blocks{{16, 1}, {32, 2}, {64, 2}};
  bool use_batchnorm = false;

  std::size_t latent_dim() const noexcept {
    return blocks.empty() ? stem_filters : blocks.back().filters;
  }
  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

/// Desk-scale default (32x32x3, stem 8, blocks 16/32/64).
BackboneConfig toy_backbone_config();
/// Full-size MobileNetV1 at 224x224 with batchnorm (L = 1024).
BackboneConfig mobilenet_v1_config();

/// Throws ConfigError for invalid strides/filters or spatial collapse.
void validate(const BackboneConfig& config);

/// [C,H,W] after the stem and after every block, in order.
std::vector<Shape> stage_shapes(const BackboneConfig& config);

/// Smallest square input the stack accepts (every stage keeps >= 1x1).
std::size_t min_input_size(const BackboneConfig& config);

/// Parameter count derived from the config alone (weights, biases and
/// batchnorm gamma/beta; running statistics excluded).
std::size_t closed_form_param_count(const BackboneConfig& config);

template <typename T>
struct BackboneTrace {
  std::vector<nn::LayerCache<T>> features;
  nn::LayerCache<T> pool;
  bool valid = false;
};

template <typename T>
class Backbone {
 public:
  Backbone(BackboneConfig config, Rng& rng);

  const BackboneConfig& config() const noexcept { return config_; }
  std::size_t latent_dim() const noexcept { return config_.latent_dim(); }
  Shape frame_shape() const {
    return {config_.input_channels, config_.input_height, config_.input_width};
  }

  /// Eval-mode encoder p(frame): [C,H,W] -> [L] or [N,C,H,W] -> [N,L].
  BasicTensor<T> forward(const BasicTensor<T>& frames) const;
  /// Eval-mode feature maps before pooling.
  BasicTensor<T> features(const BasicTensor<T>& frames) const;

  /// Train-mode pass over [N,C,H,W]; activations go into the caller's trace.
  BasicTensor<T> forward_train(const BasicTensor<T>& frames, BackboneTrace<T>& trace);
  BasicTensor<T> features_train(const BasicTensor<T>& frames, BackboneTrace<T>& trace);

  /// Backward from latent gradients [N,L]; returns d/d frames.
  BasicTensor<T> backward(BackboneTrace<T>& trace, const BasicTensor<T>& upstream,
                          std::size_t group_size);
  /// Backward from feature-map gradients (autoencoder path).
  BasicTensor<T> backward_features(BackboneTrace<T>& trace, const BasicTensor<T>& upstream,
                                   std::size_t group_size);

  std::vector<nn::Param<T>*> params() { return layers_.params(); }
  std::vector<nn::Buffer<T>*> buffers() { return layers_.buffers(); }
  std::size_t param_count() const;

  const nn::Sequential<T>& layers() const noexcept { return layers_; }
  nn::Sequential<T>& layers() noexcept { return layers_; }

 private:
  void check_frames(const BasicTensor<T>& frames) const;

  BackboneConfig config_;
  nn::Sequential<T> layers_;
  nn::GlobalAvgPool<T> pool_;
};

template <typename T>
Backbone<T> build_backbone(const BackboneConfig& config, Rng& rng) {
  return Backbone<T>(config, rng);
}

/// Sum of element counts over a parameter list.
template <typename T>
std::size_t param_count(const std::vector<nn::Param<T>*>& params) {
  std::size_t n = 0;
  for (const auto* p : params) n += p->numel();
  return n;
}

}  // namespace transnet
