#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "transnet/backbone.hpp"

namespace transnet {

/// Activation applied to the class logits before softmax.
enum class HeadActivation { kRelu, kIdentity };

std::string_view to_string(HeadActivation a) noexcept;
HeadActivation parse_head_activation(std::string_view s);

struct TransNetConfig {
  std::size_t frames = 8;    // n
  std::size_t kernels = 32;  // K, first temporal layer
  std::size_t classes = 6;   // C
  HeadActivation head_activation = HeadActivation::kRelu;
  BackboneConfig backbone;

  friend bool operator==(const TransNetConfig&, const TransNetConfig&) = default;
};

void validate(const TransNetConfig& config);

/// Backbone count plus K*(2L+1) + C*((n-1)K+1).
std::size_t closed_form_param_count(const TransNetConfig& config);

/// n=3 frames of 8x8x3, K=4, C=3: the gradient-check model.
TransNetConfig gradcheck_toy_config();
/// n=8 frames of 32x32x3 on the toy backbone, 6 classes.
TransNetConfig desk_config();

template <typename T>
struct HeadOutput {
  BasicTensor<T> hidden;  // [n-1, K]
  BasicTensor<T> logits;  // [C], after the head activation
  BasicTensor<T> probs;   // [C]
};

template <typename T>
struct TransNetTrace {
  BackboneTrace<T> backbone;
  std::vector<BasicTensor<T>> latents;  // per clip [n, L]
  std::vector<HeadOutput<T>> heads;
  bool valid = false;
};

/// Time-distributed backbone (one shared parameter set applied to each of
/// n frames) followed by two valid temporal convolutions of sizes 2 and n-1
/// and a softmax over C classes.
///
/// Clip tensors are [n,C,H,W]; batches are [B,n,C,H,W].
template <typename T>
class TransNetModel {
 public:
  TransNetModel(TransNetConfig config, Rng& rng);

  const TransNetConfig& config() const noexcept { return config_; }
  Backbone<T>& backbone() noexcept { return backbone_; }
  const Backbone<T>& backbone() const noexcept { return backbone_; }

  /// Z = per-frame latents: [n,C,H,W] -> [n,L], [B,n,C,H,W] -> [B*n,L].
  BasicTensor<T> time_distributed(const BasicTensor<T>& clips) const;
  /// Temporal head on one clip's latents Z [n,L].
  HeadOutput<T> temporal_head(const BasicTensor<T>& latents) const;
  /// Eval-mode class probabilities: [C] for one clip, [B,C] for a batch.
  BasicTensor<T> predict(const BasicTensor<T>& clips) const;

  /// Train-mode forward over [B,n,C,H,W]; returns probs [B,C].
  BasicTensor<T> forward_train(const BasicTensor<T>& clips, TransNetTrace<T>& trace);
  /// Cross-entropy backward; every clip's loss is multiplied by loss_scale
  /// (1/B for a batch mean). Returns the scaled loss sum. Gradients are
  /// reduced clip by clip in batch order.
  T backward(TransNetTrace<T>& trace, std::span<const std::size_t> labels, T loss_scale = T{1});

  std::vector<nn::Param<T>*> params();
  std::vector<nn::Param<T>*> head_params() {
    return {&temporal1_w_, &temporal1_b_, &temporal2_w_, &temporal2_b_};
  }
  std::vector<nn::Buffer<T>*> buffers() { return backbone_.buffers(); }
  std::size_t param_count() const;

  void set_backbone_frozen(bool frozen);

 private:
  std::size_t batch_of(const BasicTensor<T>& clips) const;

  TransNetConfig config_;
  Backbone<T> backbone_;
  nn::Param<T> temporal1_w_;  // [K, 2, L]
  nn::Param<T> temporal1_b_;  // [K]
  nn::Param<T> temporal2_w_;  // [C, n-1, K]
  nn::Param<T> temporal2_b_;  // [C]
};

/// Index of the largest probability; ties go to the lowest index.
template <typename T>
std::size_t argmax(std::span<const T> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

}  // namespace transnet
