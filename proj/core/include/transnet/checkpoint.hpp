#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "transnet/autoencoder.hpp"
#include "transnet/config_json.hpp"
#include "transnet/frame_classifier.hpp"
#include "transnet/transnet.hpp"

namespace transnet {

// File layout (all integers little-endian):
//   "TNET" | u32 version | u64 header length | UTF-8 JSON header | f32 payload
// The header lists every tensor with its byte offset into the payload.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorEntry {
  std::string name;
  Shape shape;
  std::string dtype;
  std::uint64_t offset = 0;
  std::uint64_t nbytes = 0;
  std::string role;  // "param" or "buffer"
};

struct CheckpointInfo {
  std::uint32_t version = 0;
  std::string header_text;  // exactly as stored
  Json header;
  std::string model_kind;
  std::vector<TensorEntry> tensors;
  std::uint64_t payload_bytes = 0;
  Json metadata;  // null when absent
};

void save_checkpoint(TransNetModel<float>& model, const std::filesystem::path& path,
                     const Json& metadata = nullptr);
void save_checkpoint(Autoencoder<float>& model, const std::filesystem::path& path,
                     const Json& metadata = nullptr);
void save_checkpoint(FrameClassifier<float>& model, const std::filesystem::path& path,
                     const Json& metadata = nullptr);

/// Parses and validates the container (magic, version, header, offsets,
/// payload length) without building a model.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

TransNetModel<float> load_transnet(const std::filesystem::path& path, Json* metadata = nullptr);
Autoencoder<float> load_autoencoder(const std::filesystem::path& path, Json* metadata = nullptr);
FrameClassifier<float> load_frame_classifier(const std::filesystem::path& path,
                                             Json* metadata = nullptr);

/// Checkpoint file as bytes; a helper for tools and tests.
std::vector<std::uint8_t> serialize_checkpoint(const std::string& model_kind, const Json& config,
                                               const std::vector<nn::Param<float>*>& params,
                                               const std::vector<nn::Buffer<float>*>& buffers,
                                               const Json& metadata);

}  // namespace transnet
