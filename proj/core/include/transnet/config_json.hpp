#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "transnet/backbone.hpp"
#include "transnet/optimizer.hpp"
#include "transnet/transnet.hpp"

namespace transnet {

using Json = nlohmann::ordered_json;

// Readers accept partial objects (missing keys keep their defaults) and
// reject unknown keys with ConfigError so that typos do not go unnoticed.

Json to_json(const BackboneConfig& c);
BackboneConfig backbone_config_from_json(const Json& j);

Json to_json(const TransNetConfig& c);
TransNetConfig transnet_config_from_json(const Json& j);

Json to_json(const OptimizerConfig& c);
OptimizerConfig optimizer_config_from_json(const Json& j);

/// ConfigError unless every key of `j` is in `allowed`.
void require_known_keys(const Json& j, std::initializer_list<const char*> allowed,
                        const char* where);

/// Reads j[key] into out when present; a type mismatch becomes ConfigError.
template <typename V>
void read_json(const Json& j, const char* key, V& out, const char* where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string(where) + "." + key + ": " + e.what());
  }
}

}  // namespace transnet
