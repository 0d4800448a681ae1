#include "transnet/frame_classifier.hpp"

#include "transnet/batching.hpp"
#include "transnet/transnet.hpp"

namespace transnet {

template <typename T>
FrameClassifier<T>::FrameClassifier(BackboneConfig config, std::size_t classes, Rng& rng)
    : backbone_(std::move(config), rng) {
  if (classes < 2) throw ConfigError("frame classifier: classes must be >= 2");
  const std::size_t l = backbone_.latent_dim();
  weight_ = nn::Param<T>("classifier.weight", he_init<T>(rng, {classes, l}, l));
  bias_ = nn::Param<T>("classifier.bias", BasicTensor<T>::zeros({classes}));
}

template <typename T>
BasicTensor<T> FrameClassifier<T>::logits(const BasicTensor<T>& latents) const {
  const std::size_t n = latents.dim(0);
  const std::size_t l = latents.dim(1);
  const std::size_t c = classes();
  BasicTensor<T> out({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    const T* z = latents.raw() + i * l;
    for (std::size_t k = 0; k < c; ++k) {
      const T* w = weight_.value.raw() + k * l;
      T acc = bias_.value[k];
      for (std::size_t j = 0; j < l; ++j) acc += z[j] * w[j];
      out[i * c + k] = acc;
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> FrameClassifier<T>::predict(const BasicTensor<T>& images) const {
  auto z = backbone_.forward(images);
  if (z.rank() == 1) z = std::move(z).reshaped({1, z.size()});
  auto out = logits(z);
  const std::size_t c = classes();
  for (std::size_t i = 0; i < out.dim(0); ++i) {
    BasicTensor<T> row({c}, std::vector<T>(out.raw() + i * c, out.raw() + (i + 1) * c));
    const auto p = nn::softmax(row);
    std::copy(p.data().begin(), p.data().end(), out.raw() + i * c);
  }
  return out;
}

template <typename T>
BasicTensor<T> FrameClassifier<T>::forward_train(const BasicTensor<T>& images,
                                                 FrameClassifierTrace<T>& trace) {
  trace.latents = backbone_.forward_train(images, trace.backbone);
  auto out = logits(trace.latents);
  trace.logits = out;
  trace.valid = true;
  return out;
}

template <typename T>
T FrameClassifier<T>::backward(FrameClassifierTrace<T>& trace, std::span<const std::size_t> labels,
                               T loss_scale) {
  if (!trace.valid) throw ContractError("frame classifier backward without a train-mode forward");
  const std::size_t n = trace.latents.dim(0);
  const std::size_t l = trace.latents.dim(1);
  const std::size_t c = classes();
  if (labels.size() != n) throw ShapeError("frame classifier: label count differs from batch");
  for (auto label : labels) {
    if (label >= c) throw IndexError("label " + std::to_string(label) + " out of range");
  }
  BasicTensor<T> dz({n, l});
  BasicTensor<T> dw({c, l});
  BasicTensor<T> db({c});
  T total{0};
  for (std::size_t i = 0; i < n; ++i) {
    BasicTensor<T> row({c}, std::vector<T>(trace.logits.raw() + i * c, trace.logits.raw() + (i + 1) * c));
    const auto ce = nn::softmax_cross_entropy(row, labels[i]);
    total += loss_scale * ce.loss;
    auto g = nn::softmax_cross_entropy_backward(ce.probs, labels[i]);
    const T* z = trace.latents.raw() + i * l;
    T* dzi = dz.raw() + i * l;
    for (std::size_t k = 0; k < c; ++k) {
      const T gk = g[k] * loss_scale;
      db[k] += gk;
      const T* w = weight_.value.raw() + k * l;
      T* dwk = dw.raw() + k * l;
      for (std::size_t j = 0; j < l; ++j) {
        dwk[j] += gk * z[j];
        dzi[j] += gk * w[j];
      }
    }
  }
  weight_.accumulate(dw);
  bias_.accumulate(db);
  backbone_.backward(trace.backbone, dz, 0);
  trace.valid = false;
  return total;
}

template <typename T>
std::vector<nn::Param<T>*> FrameClassifier<T>::params() {
  auto out = backbone_.params();
  out.push_back(&weight_);
  out.push_back(&bias_);
  return out;
}

template <typename T>
std::size_t FrameClassifier<T>::param_count() const {
  auto& self = const_cast<FrameClassifier&>(*this);
  return transnet::param_count(self.params());
}

template class FrameClassifier<float>;
template class FrameClassifier<double>;

namespace {

void check_images(const FrameClassifier<float>& model, const ImageDataset& ds) {
  const auto& c = model.backbone().config();
  if (ds.channels != c.input_channels || ds.height != c.input_height || ds.width != c.input_width) {
    throw ShapeError("image data geometry does not match the backbone input");
  }
  if (ds.class_names.size() != model.classes()) {
    throw ConfigError("image data has " + std::to_string(ds.class_names.size()) +
                      " classes but the classifier has " + std::to_string(model.classes()));
  }
}

}  // namespace

double evaluate_frames(const FrameClassifier<float>& model, const ImageDataset& ds,
                       std::size_t batch_size) {
  if (ds.items.empty()) throw DataError("evaluate_frames: empty dataset");
  check_images(model, ds);
  const std::size_t c = model.classes();
  std::size_t correct = 0;
  for (std::size_t start = 0; start < ds.items.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(ds.items.size(), start + batch_size); ++i) idx.push_back(i);
    const auto probs =
        model.predict(stack_batch(idx, [&](std::size_t i) -> const Tensor& { return ds.items[i].image; }));
    for (std::size_t b = 0; b < idx.size(); ++b) {
      correct += argmax(std::span<const float>(probs.raw() + b * c, c)) == ds.items[idx[b]].label;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ds.items.size());
}

TrainLog train_frame_classifier(FrameClassifier<float>& model, const ImageDataset& train,
                                const ImageDataset* test, const TrainOptions& options, Rng& rng) {
  if (train.items.empty()) throw DataError("train_frame_classifier: empty training set");
  if (options.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  check_images(model, train);
  if (test != nullptr) check_images(model, *test);

  Optimizer<float> opt(options.optimizer);
  const auto params = model.params();
  const std::size_t c = model.classes();
  TrainLog log;
  FrameClassifierTrace<float> trace;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    Stopwatch clock;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& idx : shuffled_batches(rng, train.items.size(), options.batch_size)) {
      std::vector<std::size_t> labels;
      for (auto i : idx) labels.push_back(train.items[i].label);
      const auto logits = model.forward_train(
          stack_batch(idx, [&](std::size_t i) -> const Tensor& { return train.items[i].image; }), trace);
      const float loss = model.backward(trace, labels, 1.0f / static_cast<float>(idx.size()));
      opt.step(params);
      loss_sum += static_cast<double>(loss) * static_cast<double>(idx.size());
      for (std::size_t b = 0; b < idx.size(); ++b) {
        correct += argmax(std::span<const float>(logits.raw() + b * c, c)) == labels[b];
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.items.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(train.items.size());
    rec.test_acc = test != nullptr && !test->items.empty() ? evaluate_frames(model, *test) : 0.0;
    rec.seconds = clock.seconds();
    log.epochs.push_back(rec);
  }
  return log;
}

}  // namespace transnet
