#include "transnet/backbone.hpp"

#include <string>

namespace transnet {

BackboneConfig toy_backbone_config() { return BackboneConfig{}; }

BackboneConfig mobilenet_v1_config() {
  BackboneConfig c;
  c.input_height = 224;
  c.input_width = 224;
  c.input_channels = 3;
  c.stem_filters = 32;
  c.blocks = {{64, 1},  {128, 2}, {128, 1}, {256, 2}, {256, 1}, {512, 2},  {512, 1},
              {512, 1}, {512, 1}, {512, 1}, {512, 1}, {1024, 2}, {1024, 1}};
  c.use_batchnorm = true;
  return c;
}

namespace {

constexpr std::size_t kKernel = 3;
constexpr std::size_t kPad = 1;

std::size_t stage_out(std::size_t in, std::size_t stride) {
  return nn::conv_output_size(in, kKernel, stride, kPad);
}

}  // namespace

void validate(const BackboneConfig& config) {
  if (config.input_channels == 0) throw ConfigError("backbone: input_channels must be >= 1");
  if (config.stem_filters == 0) throw ConfigError("backbone: stem_filters must be >= 1");
  const std::size_t min_size = min_input_size(config);
  if (config.input_height < min_size || config.input_width < min_size) {
    throw ConfigError("backbone: input " + std::to_string(config.input_height) + "x" +
                      std::to_string(config.input_width) + " below minimum size " +
                      std::to_string(min_size));
  }
  for (std::size_t i = 0; i < config.blocks.size(); ++i) {
    const auto& b = config.blocks[i];
    if (b.filters == 0) throw ConfigError("backbone: block " + std::to_string(i) + " has 0 filters");
    if (b.stride != 1 && b.stride != 2) {
      throw ConfigError("backbone: block " + std::to_string(i) + " stride must be 1 or 2, got " +
                        std::to_string(b.stride));
    }
  }
}

std::size_t min_input_size(const BackboneConfig&) {
  // 3x3 kernels with padding 1 keep every stage at >= 1x1 for any input >= 1.
  return 1;
}

std::vector<Shape> stage_shapes(const BackboneConfig& config) {
  validate(config);
  std::vector<Shape> out;
  std::size_t h = stage_out(config.input_height, 2);
  std::size_t w = stage_out(config.input_width, 2);
  out.push_back({config.stem_filters, h, w});
  for (const auto& b : config.blocks) {
    h = stage_out(h, b.stride);
    w = stage_out(w, b.stride);
    out.push_back({b.filters, h, w});
  }
  return out;
}

std::size_t closed_form_param_count(const BackboneConfig& config) {
  validate(config);
  const std::size_t bn = config.use_batchnorm ? 2 : 0;
  const std::size_t k2 = kKernel * kKernel;
  std::size_t total = k2 * config.input_channels * config.stem_filters + config.stem_filters +
                      bn * config.stem_filters;
  std::size_t prev = config.stem_filters;
  for (const auto& b : config.blocks) {
    total += k2 * prev + prev + bn * prev;               // depthwise
    total += prev * b.filters + b.filters + bn * b.filters;  // pointwise
    prev = b.filters;
  }
  return total;
}

template <typename T>
Backbone<T>::Backbone(BackboneConfig config, Rng& rng) : config_(std::move(config)) {
  validate(config_);
  using nn::Conv2dGeometry;
  const auto add_norm_act = [&](const std::string& name, std::size_t channels) {
    if (config_.use_batchnorm) layers_.push(std::make_unique<nn::BatchNorm2d<T>>(name, channels));
    layers_.push(std::make_unique<nn::ReLU<T>>());
  };
  layers_.push(std::make_unique<nn::Conv2d<T>>("backbone.stem.conv", config_.input_channels,
                                               config_.stem_filters, kKernel,
                                               Conv2dGeometry{2, kPad}, rng));
  add_norm_act("backbone.stem.bn", config_.stem_filters);
  std::size_t prev = config_.stem_filters;
  for (std::size_t i = 0; i < config_.blocks.size(); ++i) {
    const auto& b = config_.blocks[i];
    const std::string prefix = "backbone.block" + std::to_string(i + 1);
    layers_.push(std::make_unique<nn::DepthwiseConv2d<T>>(prefix + ".dw", prev, kKernel,
                                                          Conv2dGeometry{b.stride, kPad}, rng));
    add_norm_act(prefix + ".dw_bn", prev);
    layers_.push(std::make_unique<nn::Conv2d<T>>(prefix + ".pw", prev, b.filters, 1,
                                                 Conv2dGeometry{1, 0}, rng));
    add_norm_act(prefix + ".pw_bn", b.filters);
    prev = b.filters;
  }
}

template <typename T>
void Backbone<T>::check_frames(const BasicTensor<T>& frames) const {
  const Shape expect = frame_shape();
  const bool ok = (frames.rank() == 3 && frames.shape() == expect) ||
                  (frames.rank() == 4 && Shape(frames.shape().begin() + 1, frames.shape().end()) == expect);
  if (!ok) {
    throw ShapeError("backbone: frame shape " + to_string(frames.shape()) + " does not match " +
                     to_string(expect));
  }
}

template <typename T>
BasicTensor<T> Backbone<T>::features(const BasicTensor<T>& frames) const {
  check_frames(frames);
  return layers_.forward(frames);
}

template <typename T>
BasicTensor<T> Backbone<T>::forward(const BasicTensor<T>& frames) const {
  return pool_.forward(features(frames));
}

template <typename T>
BasicTensor<T> Backbone<T>::features_train(const BasicTensor<T>& frames, BackboneTrace<T>& trace) {
  check_frames(frames);
  if (frames.rank() != 4) throw ShapeError("backbone: train-mode input must be [N,C,H,W]");
  auto out = layers_.forward_train(frames, trace.features);
  trace.pool = {};
  trace.valid = true;
  return out;
}

template <typename T>
BasicTensor<T> Backbone<T>::forward_train(const BasicTensor<T>& frames, BackboneTrace<T>& trace) {
  auto maps = features_train(frames, trace);
  return pool_.forward_train(maps, trace.pool);
}

template <typename T>
BasicTensor<T> Backbone<T>::backward(BackboneTrace<T>& trace, const BasicTensor<T>& upstream,
                                     std::size_t group_size) {
  if (!trace.valid || !trace.pool.filled) {
    throw ContractError("backbone backward called without a train-mode forward");
  }
  auto g = pool_.backward(trace.pool, upstream, group_size);
  trace.pool = {};
  return backward_features(trace, g, group_size);
}

template <typename T>
BasicTensor<T> Backbone<T>::backward_features(BackboneTrace<T>& trace,
                                              const BasicTensor<T>& upstream,
                                              std::size_t group_size) {
  if (!trace.valid) throw ContractError("backbone backward called without a train-mode forward");
  auto g = layers_.backward(trace.features, upstream, group_size);
  trace.valid = false;
  return g;
}

template <typename T>
std::size_t Backbone<T>::param_count() const {
  auto& self = const_cast<Backbone&>(*this);
  return transnet::param_count(self.layers_.params());
}

template class Backbone<float>;
template class Backbone<double>;

}  // namespace transnet
