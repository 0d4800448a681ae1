#include "transnet/config_json.hpp"

#include <string>

namespace transnet {

void require_known_keys(const Json& j, std::initializer_list<const char*> allowed,
                        const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
  }
}

Json to_json(const BackboneConfig& c) {
  Json blocks = Json::array();
  for (const auto& b : c.blocks) blocks.push_back({{"filters", b.filters}, {"stride", b.stride}});
  return {{"input_height", c.input_height},
          {"input_width", c.input_width},
          {"input_channels", c.input_channels},
          {"stem_filters", c.stem_filters},
          {"blocks", std::move(blocks)},
          {"use_batchnorm", c.use_batchnorm}};
}

BackboneConfig backbone_config_from_json(const Json& j) {
  constexpr const char* where = "backbone";
  require_known_keys(j, {"preset", "input_height", "input_width", "input_size", "input_channels",
                         "stem_filters", "blocks", "use_batchnorm"},
                     where);
  BackboneConfig c;
  if (j.contains("preset")) {
    const auto preset = j.at("preset").get<std::string>();
    if (preset == "toy") {
      c = toy_backbone_config();
    } else if (preset == "mobilenet_v1") {
      c = mobilenet_v1_config();
    } else {
      throw ConfigError("backbone.preset: unknown preset '" + preset + "' (toy|mobilenet_v1)");
    }
  }
  if (j.contains("input_size")) {
    read_json(j, "input_size", c.input_height, where);
    c.input_width = c.input_height;
  }
  read_json(j, "input_height", c.input_height, where);
  read_json(j, "input_width", c.input_width, where);
  read_json(j, "input_channels", c.input_channels, where);
  read_json(j, "stem_filters", c.stem_filters, where);
  read_json(j, "use_batchnorm", c.use_batchnorm, where);
  if (j.contains("blocks")) {
    if (!j["blocks"].is_array()) throw ConfigError("backbone.blocks: expected an array");
    c.blocks.clear();
    for (const auto& b : j["blocks"]) {
      BlockSpec spec;
      if (b.is_array() && b.size() == 2) {
        spec.filters = b[0].get<std::size_t>();
        spec.stride = b[1].get<std::size_t>();
      } else {
        require_known_keys(b, {"filters", "stride"}, "backbone.blocks[]");
        read_json(b, "filters", spec.filters, "backbone.blocks[]");
        read_json(b, "stride", spec.stride, "backbone.blocks[]");
      }
      c.blocks.push_back(spec);
    }
  }
  validate(c);
  return c;
}

Json to_json(const TransNetConfig& c) {
  return {{"frames", c.frames},
          {"kernels", c.kernels},
          {"classes", c.classes},
          {"head_activation", std::string(to_string(c.head_activation))},
          {"backbone", to_json(c.backbone)}};
}

TransNetConfig transnet_config_from_json(const Json& j) {
  constexpr const char* where = "model";
  require_known_keys(j, {"frames", "kernels", "classes", "head_activation", "backbone"}, where);
  TransNetConfig c;
  read_json(j, "frames", c.frames, where);
  read_json(j, "kernels", c.kernels, where);
  read_json(j, "classes", c.classes, where);
  if (j.contains("head_activation")) {
    c.head_activation = parse_head_activation(j.at("head_activation").get<std::string>());
  }
  if (j.contains("backbone")) c.backbone = backbone_config_from_json(j.at("backbone"));
  validate(c);
  return c;
}

Json to_json(const OptimizerConfig& c) {
  return {{"kind", std::string(to_string(c.kind))},
          {"learning_rate", c.learning_rate},
          {"momentum", c.momentum},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon}};
}

OptimizerConfig optimizer_config_from_json(const Json& j) {
  constexpr const char* where = "optimizer";
  require_known_keys(j, {"kind", "learning_rate", "momentum", "beta1", "beta2", "epsilon"}, where);
  OptimizerConfig c;
  if (j.contains("kind")) c.kind = parse_optimizer_kind(j.at("kind").get<std::string>());
  read_json(j, "learning_rate", c.learning_rate, where);
  read_json(j, "momentum", c.momentum, where);
  read_json(j, "beta1", c.beta1, where);
  read_json(j, "beta2", c.beta2, where);
  read_json(j, "epsilon", c.epsilon, where);
  Optimizer<float> check(c);  // validates ranges
  return c;
}

}  // namespace transnet
