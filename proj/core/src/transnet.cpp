#include "transnet/transnet.hpp"

#include <algorithm>
#include <string>

#include "transnet/nn/ops.hpp"

namespace transnet {

std::string_view to_string(HeadActivation a) noexcept {
  return a == HeadActivation::kRelu ? "relu" : "identity";
}

HeadActivation parse_head_activation(std::string_view s) {
  if (s == "relu") return HeadActivation::kRelu;
  if (s == "identity") return HeadActivation::kIdentity;
  throw ConfigError("unknown head_activation '" + std::string(s) + "' (expected relu|identity)");
}

void validate(const TransNetConfig& config) {
  if (config.frames < 2) throw ConfigError("transnet: frames (n) must be >= 2");
  if (config.kernels < 1) throw ConfigError("transnet: kernels (K) must be >= 1");
  if (config.classes < 2) throw ConfigError("transnet: classes (C) must be >= 2");
  validate(config.backbone);
}

std::size_t closed_form_param_count(const TransNetConfig& config) {
  validate(config);
  const std::size_t l = config.backbone.latent_dim();
  const std::size_t k = config.kernels;
  const std::size_t c = config.classes;
  return closed_form_param_count(config.backbone) + k * (2 * l + 1) +
         c * ((config.frames - 1) * k + 1);
}

TransNetConfig gradcheck_toy_config() {
  TransNetConfig c;
  c.frames = 3;
  c.kernels = 4;
  c.classes = 3;
  c.backbone.input_height = 8;
  c.backbone.input_width = 8;
  c.backbone.input_channels = 3;
  c.backbone.stem_filters = 4;
  c.backbone.blocks = {{6, 1}, {8, 2}};
  return c;
}

TransNetConfig desk_config() { return TransNetConfig{}; }

template <typename T>
TransNetModel<T>::TransNetModel(TransNetConfig config, Rng& rng)
    : config_((validate(config), std::move(config))), backbone_(config_.backbone, rng) {
  const std::size_t l = config_.backbone.latent_dim();
  const std::size_t k = config_.kernels;
  const std::size_t c = config_.classes;
  const std::size_t span2 = config_.frames - 1;
  temporal1_w_ = nn::Param<T>("temporal1.weight", he_init<T>(rng, {k, 2, l}, 2 * l));
  temporal1_b_ = nn::Param<T>("temporal1.bias", BasicTensor<T>::zeros({k}));
  temporal2_w_ = nn::Param<T>("temporal2.weight", he_init<T>(rng, {c, span2, k}, span2 * k));
  temporal2_b_ = nn::Param<T>("temporal2.bias", BasicTensor<T>::zeros({c}));
}

template <typename T>
std::size_t TransNetModel<T>::batch_of(const BasicTensor<T>& clips) const {
  const Shape frame = backbone_.frame_shape();
  Shape clip{config_.frames};
  clip.insert(clip.end(), frame.begin(), frame.end());
  if (clips.rank() == 4 && clips.shape() == clip) return 0;
  if (clips.rank() == 5 && Shape(clips.shape().begin() + 1, clips.shape().end()) == clip) {
    return clips.shape()[0];
  }
  throw ShapeError("transnet: clip tensor " + to_string(clips.shape()) + " does not match [" +
                   "B," + std::to_string(config_.frames) + "," + to_string(frame).substr(1));
}

template <typename T>
BasicTensor<T> TransNetModel<T>::time_distributed(const BasicTensor<T>& clips) const {
  const std::size_t batch = batch_of(clips);
  const Shape frame = backbone_.frame_shape();
  const std::size_t total = (batch == 0 ? 1 : batch) * config_.frames;
  auto frames = clips.reshaped({total, frame[0], frame[1], frame[2]});
  return backbone_.forward(frames);
}

template <typename T>
HeadOutput<T> TransNetModel<T>::temporal_head(const BasicTensor<T>& latents) const {
  const Shape expect{config_.frames, config_.backbone.latent_dim()};
  if (latents.shape() != expect) {
    throw ShapeError("temporal head: latents " + to_string(latents.shape()) + " expected " +
                     to_string(expect));
  }
  HeadOutput<T> out;
  out.hidden = nn::relu_forward(nn::conv1d_forward(latents, temporal1_w_.value, temporal1_b_.value));
  auto v = nn::conv1d_forward(out.hidden, temporal2_w_.value, temporal2_b_.value)
               .reshaped({config_.classes});
  if (config_.head_activation == HeadActivation::kRelu) v = nn::relu_forward(v);
  out.probs = nn::softmax(v);
  out.logits = std::move(v);
  return out;
}

template <typename T>
BasicTensor<T> TransNetModel<T>::predict(const BasicTensor<T>& clips) const {
  const std::size_t batch = batch_of(clips);
  const auto z = time_distributed(clips);
  const std::size_t n = config_.frames;
  const std::size_t l = config_.backbone.latent_dim();
  const std::size_t clips_n = batch == 0 ? 1 : batch;
  BasicTensor<T> probs({clips_n, config_.classes});
  for (std::size_t b = 0; b < clips_n; ++b) {
    std::vector<T> rows(z.raw() + b * n * l, z.raw() + (b + 1) * n * l);
    auto head = temporal_head(BasicTensor<T>({n, l}, std::move(rows)));
    std::copy(head.probs.data().begin(), head.probs.data().end(),
              probs.raw() + b * config_.classes);
  }
  if (batch == 0) return std::move(probs).reshaped({config_.classes});
  return probs;
}

template <typename T>
BasicTensor<T> TransNetModel<T>::forward_train(const BasicTensor<T>& clips,
                                               TransNetTrace<T>& trace) {
  const std::size_t batch = batch_of(clips);
  if (batch == 0) throw ShapeError("transnet: train-mode input must be a batch [B,n,C,H,W]");
  const Shape frame = backbone_.frame_shape();
  const std::size_t n = config_.frames;
  const std::size_t l = config_.backbone.latent_dim();
  auto frames = clips.reshaped({batch * n, frame[0], frame[1], frame[2]});
  const auto z = backbone_.forward_train(frames, trace.backbone);

  trace.latents.clear();
  trace.heads.clear();
  BasicTensor<T> probs({batch, config_.classes});
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<T> rows(z.raw() + b * n * l, z.raw() + (b + 1) * n * l);
    trace.latents.emplace_back(Shape{n, l}, std::move(rows));
    trace.heads.push_back(temporal_head(trace.latents.back()));
    std::copy(trace.heads.back().probs.data().begin(), trace.heads.back().probs.data().end(),
              probs.raw() + b * config_.classes);
  }
  trace.valid = true;
  return probs;
}

template <typename T>
T TransNetModel<T>::backward(TransNetTrace<T>& trace, std::span<const std::size_t> labels,
                             T loss_scale) {
  if (!trace.valid) throw ContractError("transnet backward called without a train-mode forward");
  const std::size_t batch = trace.heads.size();
  if (labels.size() != batch) {
    throw ShapeError("transnet backward: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(batch));
  }
  for (const auto label : labels) {
    if (label >= config_.classes) {
      throw IndexError("label " + std::to_string(label) + " out of range for " +
                       std::to_string(config_.classes) + " classes");
    }
  }
  const std::size_t n = config_.frames;
  const std::size_t l = config_.backbone.latent_dim();
  BasicTensor<T> dz({batch * n, l});
  T total{0};
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& head = trace.heads[b];
    const std::size_t label = labels[b];
    total += loss_scale * nn::softmax_cross_entropy(head.logits, label).loss;

    auto dv = nn::softmax_cross_entropy_backward(head.probs, label);
    for (auto& x : dv.data()) x *= loss_scale;
    if (config_.head_activation == HeadActivation::kRelu) dv = nn::relu_backward(head.logits, dv);
    auto g2 = nn::conv1d_backward(head.hidden, temporal2_w_.value,
                                  std::move(dv).reshaped({1, config_.classes}));
    temporal2_w_.accumulate(g2.weight);
    temporal2_b_.accumulate(g2.bias);
    auto dh = nn::relu_backward(head.hidden, g2.input);
    auto g1 = nn::conv1d_backward(trace.latents[b], temporal1_w_.value, dh);
    temporal1_w_.accumulate(g1.weight);
    temporal1_b_.accumulate(g1.bias);
    std::copy(g1.input.data().begin(), g1.input.data().end(), dz.raw() + b * n * l);
  }
  backbone_.backward(trace.backbone, dz, n);
  trace.valid = false;
  trace.latents.clear();
  trace.heads.clear();
  return total;
}

template <typename T>
std::vector<nn::Param<T>*> TransNetModel<T>::params() {
  auto out = backbone_.params();
  for (auto* p : head_params()) out.push_back(p);
  return out;
}

template <typename T>
std::size_t TransNetModel<T>::param_count() const {
  auto& self = const_cast<TransNetModel&>(*this);
  return transnet::param_count(self.params());
}

template <typename T>
void TransNetModel<T>::set_backbone_frozen(bool frozen) {
  for (auto* p : backbone_.params()) p->frozen = frozen;
}

template class TransNetModel<float>;
template class TransNetModel<double>;

}  // namespace transnet
