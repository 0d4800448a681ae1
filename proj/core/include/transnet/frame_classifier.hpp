#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "transnet/backbone.hpp"
#include "transnet/data.hpp"
#include "transnet/trainer.hpp"

namespace transnet {

template <typename T>
struct FrameClassifierTrace {
  BackboneTrace<T> backbone;
  BasicTensor<T> latents;  // [N, L]
  BasicTensor<T> logits;   // [N, C]
  bool valid = false;
};

/// Backbone plus one dense softmax layer over single frames. Used to
/// pretrain a backbone on image classification before it is transferred
/// into a TransNet.
template <typename T>
class FrameClassifier {
 public:
  FrameClassifier(BackboneConfig config, std::size_t classes, Rng& rng);

  std::size_t classes() const noexcept { return bias_.value.size(); }
  Backbone<T>& backbone() noexcept { return backbone_; }
  const Backbone<T>& backbone() const noexcept { return backbone_; }

  /// Eval-mode class probabilities [N, C] for images [N,C,H,W].
  BasicTensor<T> predict(const BasicTensor<T>& images) const;
  BasicTensor<T> forward_train(const BasicTensor<T>& images, FrameClassifierTrace<T>& trace);
  /// Cross-entropy backward scaled by loss_scale; returns the scaled loss sum.
  T backward(FrameClassifierTrace<T>& trace, std::span<const std::size_t> labels, T loss_scale);

  std::vector<nn::Param<T>*> params();
  std::vector<nn::Buffer<T>*> buffers() { return backbone_.buffers(); }
  std::size_t param_count() const;

 private:
  BasicTensor<T> logits(const BasicTensor<T>& latents) const;

  Backbone<T> backbone_;
  nn::Param<T> weight_;  // [C, L]
  nn::Param<T> bias_;    // [C]
};

/// Eval-mode accuracy of a frame classifier.
double evaluate_frames(const FrameClassifier<float>& model, const ImageDataset& ds,
                       std::size_t batch_size = 64);

/// Same loop as train_classifier, over single images. test may be null, in
/// which case test_acc is recorded as 0.
TrainLog train_frame_classifier(FrameClassifier<float>& model, const ImageDataset& train,
                                const ImageDataset* test, const TrainOptions& options, Rng& rng);

}  // namespace transnet
