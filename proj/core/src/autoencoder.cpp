#include "transnet/autoencoder.hpp"

#include <map>
#include <string>

#include "transnet/batching.hpp"

namespace transnet {

namespace {

struct DecoderStage {
  std::size_t out_channels;
};

// Stride-2 stages of the encoder, first to last, with the channel count the
// decoder restores when undoing each one.
std::vector<DecoderStage> downsampling_stages(const BackboneConfig& config) {
  std::vector<DecoderStage> out;
  std::size_t h = config.input_height;
  std::size_t w = config.input_width;
  const auto halve = [&](const std::string& where) {
    if (h % 2 != 0 || w % 2 != 0) {
      throw ConfigError("autoencoder: " + where + " downsamples an odd size " + std::to_string(h) +
                        "x" + std::to_string(w) + "; the decoder cannot restore it");
    }
    h /= 2;
    w /= 2;
  };
  halve("stem");
  out.push_back({config.stem_filters});
  std::size_t prev = config.stem_filters;
  for (std::size_t i = 0; i < config.blocks.size(); ++i) {
    if (config.blocks[i].stride == 2) {
      halve("block " + std::to_string(i + 1));
      out.push_back({prev});
    }
    prev = config.blocks[i].filters;
  }
  return out;
}

}  // namespace

template <typename T>
Autoencoder<T>::Autoencoder(BackboneConfig config, Rng& rng) : encoder_(config, rng) {
  const auto stages = downsampling_stages(encoder_.config());
  std::size_t channels = encoder_.latent_dim();
  std::size_t index = 1;
  for (auto it = stages.rbegin(); it != stages.rend(); ++it, ++index) {
    decoder_.push(std::make_unique<nn::UpsampleNearest2x<T>>());
    decoder_.push(std::make_unique<nn::Conv2d<T>>("decoder.up" + std::to_string(index) + ".conv",
                                                  channels, it->out_channels, 3,
                                                  nn::Conv2dGeometry{1, 1}, rng));
    decoder_.push(std::make_unique<nn::ReLU<T>>());
    channels = it->out_channels;
  }
  decoder_.push(
      std::make_unique<nn::Conv2d<T>>("decoder.head", channels, 1, 1, nn::Conv2dGeometry{1, 0}, rng));
  upsample_stages_ = stages.size();
}

template <typename T>
BasicTensor<T> Autoencoder<T>::forward(const BasicTensor<T>& images) const {
  return decoder_.forward(encoder_.features(images));
}

template <typename T>
BasicTensor<T> Autoencoder<T>::forward_train(const BasicTensor<T>& images,
                                             AutoencoderTrace<T>& trace) {
  auto maps = encoder_.features_train(images, trace.encoder);
  auto logits = decoder_.forward_train(maps, trace.decoder);
  trace.valid = true;
  return logits;
}

template <typename T>
void Autoencoder<T>::backward(AutoencoderTrace<T>& trace, const BasicTensor<T>& upstream) {
  if (!trace.valid) throw ContractError("autoencoder backward called without a train-mode forward");
  auto g = decoder_.backward(trace.decoder, upstream, 0);
  encoder_.backward_features(trace.encoder, g, 0);
  trace.valid = false;
}

template <typename T>
std::vector<nn::Param<T>*> Autoencoder<T>::params() {
  auto out = encoder_.params();
  for (auto* p : decoder_.params()) out.push_back(p);
  return out;
}

template <typename T>
std::size_t Autoencoder<T>::param_count() const {
  auto& self = const_cast<Autoencoder&>(*this);
  return transnet::param_count(self.params());
}

template <typename T>
double mean_iou(const BasicTensor<T>& logits, const BasicTensor<T>& masks) {
  if (logits.shape() != masks.shape()) {
    throw ShapeError("iou: logits " + to_string(logits.shape()) + " vs masks " +
                     to_string(masks.shape()));
  }
  const std::size_t images = logits.rank() == 4 ? logits.dim(0) : 1;
  const std::size_t pixels = logits.size() / images;
  double total = 0.0;
  for (std::size_t i = 0; i < images; ++i) {
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t p = i * pixels; p < (i + 1) * pixels; ++p) {
      const bool pred = logits[p] >= T{0};
      const bool truth = masks[p] >= T(0.5);
      inter += pred && truth;
      uni += pred || truth;
    }
    total += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  return total / static_cast<double>(images);
}

namespace {

void check_seg_geometry(const BackboneConfig& c, const SegDataset& ds) {
  if (ds.channels != c.input_channels || ds.height != c.input_height || ds.width != c.input_width) {
    throw ShapeError("segmentation data is " + std::to_string(ds.channels) + "x" +
                     std::to_string(ds.height) + "x" + std::to_string(ds.width) +
                     " but the encoder expects " + std::to_string(c.input_channels) + "x" +
                     std::to_string(c.input_height) + "x" + std::to_string(c.input_width));
  }
}

}  // namespace

double evaluate_segmentation(const Autoencoder<float>& ae, const SegDataset& ds,
                             std::size_t batch_size) {
  if (ds.items.empty()) throw DataError("segmentation evaluation on an empty dataset");
  check_seg_geometry(ae.config(), ds);
  double total = 0.0;
  for (std::size_t start = 0; start < ds.items.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(ds.items.size(), start + batch_size); ++i) idx.push_back(i);
    const auto x = stack_batch(idx, [&](std::size_t i) -> const Tensor& { return ds.items[i].image; });
    const auto y = stack_batch(idx, [&](std::size_t i) -> const Tensor& { return ds.items[i].mask; });
    total += mean_iou(ae.forward(x), y) * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(ds.items.size());
}

SegTrainLog train_segmentation(Autoencoder<float>& ae, const SegDataset& train,
                               const SegDataset* heldout, const SegTrainOptions& options, Rng& rng) {
  if (train.items.empty()) throw DataError("segmentation training on an empty dataset");
  if (options.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  check_seg_geometry(ae.config(), train);
  validate(train);
  if (heldout != nullptr) check_seg_geometry(ae.config(), *heldout);

  Optimizer<float> opt(options.optimizer);
  const auto params = ae.params();
  SegTrainLog log;
  AutoencoderTrace<float> trace;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    Stopwatch clock;
    double loss_sum = 0.0;
    double iou_sum = 0.0;
    for (const auto& idx : shuffled_batches(rng, train.items.size(), options.batch_size)) {
      const auto x = stack_batch(idx, [&](std::size_t i) -> const Tensor& { return train.items[i].image; });
      const auto y = stack_batch(idx, [&](std::size_t i) -> const Tensor& { return train.items[i].mask; });
      const auto logits = ae.forward_train(x, trace);
      const auto bce = nn::sigmoid_bce(logits, y);
      ae.backward(trace, nn::sigmoid_bce_backward(bce.probs, y));
      opt.step(params);
      const auto b = static_cast<double>(idx.size());
      loss_sum += static_cast<double>(bce.loss) * b;
      iou_sum += mean_iou(logits, y) * b;
    }
    SegEpoch rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.items.size());
    rec.train_iou = iou_sum / static_cast<double>(train.items.size());
    if (heldout != nullptr && !heldout->items.empty()) rec.heldout_iou = evaluate_segmentation(ae, *heldout);
    rec.seconds = clock.seconds();
    log.epochs.push_back(rec);
  }
  return log;
}

template <typename T>
std::size_t transfer_backbone(Backbone<T>& source, Backbone<T>& target) {
  if (!(source.config() == target.config())) {
    throw TransferError("encoder and backbone configurations differ (latent " +
                        std::to_string(source.latent_dim()) + " vs " +
                        std::to_string(target.latent_dim()) + ")");
  }
  std::map<std::string, nn::Param<T>*, std::less<>> src_params;
  for (auto* p : source.params()) src_params[p->name] = p;
  std::map<std::string, nn::Buffer<T>*, std::less<>> src_buffers;
  for (auto* b : source.buffers()) src_buffers[b->name] = b;

  // validate everything first; writes happen only once nothing can fail
  const auto dst_params = target.params();
  const auto dst_buffers = target.buffers();
  for (const auto* p : dst_params) {
    const auto it = src_params.find(p->name);
    if (it == src_params.end()) throw TransferError("encoder has no tensor named " + p->name);
    if (it->second->value.shape() != p->value.shape()) {
      throw TransferError(p->name + ": encoder shape " + to_string(it->second->value.shape()) +
                          " vs backbone " + to_string(p->value.shape()));
    }
  }
  for (const auto* b : dst_buffers) {
    const auto it = src_buffers.find(b->name);
    if (it == src_buffers.end() || it->second->value.shape() != b->value.shape()) {
      throw TransferError("encoder buffer missing or mismatched: " + b->name);
    }
  }
  for (auto* p : dst_params) p->value = src_params.at(p->name)->value;
  for (auto* b : dst_buffers) b->value = src_buffers.at(b->name)->value;
  return dst_params.size();
}

template class Autoencoder<float>;
template class Autoencoder<double>;
template double mean_iou<float>(const Tensor&, const Tensor&);
template double mean_iou<double>(const TensorD&, const TensorD&);
template std::size_t transfer_backbone<float>(Backbone<float>&, Backbone<float>&);
template std::size_t transfer_backbone<double>(Backbone<double>&, Backbone<double>&);

}  // namespace transnet
