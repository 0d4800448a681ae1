#pragma once

#include <cstddef>
#include <vector>

#include "transnet/backbone.hpp"
#include "transnet/data.hpp"
#include "transnet/optimizer.hpp"
#include "transnet/transnet.hpp"

namespace transnet {

template <typename T>
struct AutoencoderTrace {
  BackboneTrace<T> encoder;
  std::vector<nn::LayerCache<T>> decoder;
  bool valid = false;
};

/// Segmentation autoencoder. The encoder is a Backbone built exactly as
/// build_backbone would build it (same names, same draws from the rng), used
/// up to its feature maps. The decoder undoes each stride-2 stage with a
/// nearest 2x upsample, a 3x3 convolution and ReLU, and ends in a 1x1
/// convolution producing one logit per pixel.
template <typename T>
class Autoencoder {
 public:
  /// ConfigError when a stride-2 stage sees an odd spatial size, since the
  /// decoder could not restore the input size.
  Autoencoder(BackboneConfig config, Rng& rng);

  const BackboneConfig& config() const noexcept { return encoder_.config(); }
  Backbone<T>& encoder() noexcept { return encoder_; }
  const Backbone<T>& encoder() const noexcept { return encoder_; }
  const nn::Sequential<T>& decoder() const noexcept { return decoder_; }
  std::size_t upsample_stages() const noexcept { return upsample_stages_; }

  /// Eval-mode logits: [C,H,W] -> [1,H,W], [N,C,H,W] -> [N,1,H,W].
  BasicTensor<T> forward(const BasicTensor<T>& images) const;

  BasicTensor<T> forward_train(const BasicTensor<T>& images, AutoencoderTrace<T>& trace);
  /// Backward from logit gradients; accumulates into encoder and decoder.
  void backward(AutoencoderTrace<T>& trace, const BasicTensor<T>& upstream);

  std::vector<nn::Param<T>*> params();
  std::vector<nn::Buffer<T>*> buffers() { return encoder_.buffers(); }
  std::size_t param_count() const;

 private:
  Backbone<T> encoder_;
  nn::Sequential<T> decoder_;
  std::size_t upsample_stages_ = 0;
};

template <typename T>
Autoencoder<T> build_autoencoder(const BackboneConfig& config, Rng& rng) {
  return Autoencoder<T>(config, rng);
}

/// Mean per-image intersection-over-union of (logit >= 0) against
/// (mask >= 0.5). An image whose prediction and mask are both empty scores 1.
template <typename T>
double mean_iou(const BasicTensor<T>& logits, const BasicTensor<T>& masks);

struct SegEpoch {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_iou = 0.0;
  double heldout_iou = -1.0;  // -1 when no held-out set was given
  double seconds = 0.0;
};

struct SegTrainLog {
  std::vector<SegEpoch> epochs;
};

struct SegTrainOptions {
  std::size_t epochs = 30;
  std::size_t batch_size = 24;
  OptimizerConfig optimizer;
};

/// Minimizes the pixel-mean sigmoid BCE over shuffled mini-batches.
/// DataError on an empty training set; ShapeError when the data geometry
/// differs from the encoder input.
SegTrainLog train_segmentation(Autoencoder<float>& ae, const SegDataset& train,
                               const SegDataset* heldout, const SegTrainOptions& options, Rng& rng);

/// Eval-mode mean IoU over a dataset.
double evaluate_segmentation(const Autoencoder<float>& ae, const SegDataset& ds,
                             std::size_t batch_size = 64);

/// Copies every encoder parameter (and batchnorm statistic) into `target`
/// by name. All names and shapes are checked before anything is written, so
/// a TransferError leaves the target untouched. Returns the number of
/// parameter tensors copied.
template <typename T>
std::size_t transfer_backbone(Backbone<T>& source, Backbone<T>& target);

template <typename T>
std::size_t transfer_encoder(Autoencoder<T>& ae, TransNetModel<T>& model) {
  return transfer_backbone(ae.encoder(), model.backbone());
}

}  // namespace transnet
