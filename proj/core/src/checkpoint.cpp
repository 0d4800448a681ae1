#include "transnet/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>

namespace transnet {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'T', 'N', 'E', 'T'};
constexpr std::size_t kPrefix = 16;  // magic + version + header length

[[noreturn]] void fail(CheckpointErrorKind kind, const fs::path& path, const std::string& what) {
  throw CheckpointError(kind, path.string() + ": " + what);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
std::uint64_t get_le(const std::uint8_t* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

Json shape_json(const Shape& s) {
  Json a = Json::array();
  for (auto d : s) a.push_back(d);
  return a;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(CheckpointErrorKind::kIo, path, "cannot open checkpoint");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(CheckpointErrorKind::kIo, path, "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(CheckpointErrorKind::kIo, path, "write failed");
}

struct Slot {
  std::string name;
  BasicTensor<float>* value;
  const char* role;
};

std::vector<Slot> slots_of(const std::vector<nn::Param<float>*>& params,
                           const std::vector<nn::Buffer<float>*>& buffers) {
  std::vector<Slot> out;
  for (auto* p : params) out.push_back({p->name, &p->value, "param"});
  for (auto* b : buffers) out.push_back({b->name, &b->value, "buffer"});
  return out;
}

CheckpointInfo parse(const std::vector<std::uint8_t>& bytes, const fs::path& path,
                     std::size_t* payload_start) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail(CheckpointErrorKind::kBadMagic, path, "not a TNET checkpoint");
  }
  if (bytes.size() < 8) fail(CheckpointErrorKind::kTruncated, path, "file ends inside the version field");
  CheckpointInfo info;
  info.version = static_cast<std::uint32_t>(get_le(bytes.data() + 4, 4));
  if (info.version != kCheckpointVersion) {
    fail(CheckpointErrorKind::kVersionMismatch, path,
         "format version " + std::to_string(info.version) + ", this build reads " +
             std::to_string(kCheckpointVersion));
  }
  if (bytes.size() < kPrefix) fail(CheckpointErrorKind::kTruncated, path, "file ends inside the prefix");
  const std::uint64_t header_len = get_le(bytes.data() + 8, 8);
  if (header_len > bytes.size() - kPrefix) {
    fail(CheckpointErrorKind::kTruncated, path, "header extends past end of file");
  }
  info.header_text.assign(reinterpret_cast<const char*>(bytes.data() + kPrefix), header_len);
  try {
    info.header = Json::parse(info.header_text);
    if (info.header.at("format_version").get<std::uint32_t>() != info.version) {
      fail(CheckpointErrorKind::kMalformed, path, "header format_version disagrees with the prefix");
    }
    info.model_kind = info.header.at("model_kind").get<std::string>();
    info.payload_bytes = info.header.at("payload_bytes").get<std::uint64_t>();
    for (const auto& t : info.header.at("tensors")) {
      TensorEntry e;
      e.name = t.at("name").get<std::string>();
      e.shape = t.at("shape").get<Shape>();
      e.dtype = t.at("dtype").get<std::string>();
      e.offset = t.at("offset").get<std::uint64_t>();
      e.nbytes = t.at("nbytes").get<std::uint64_t>();
      e.role = t.at("role").get<std::string>();
      info.tensors.push_back(std::move(e));
    }
    if (info.header.contains("metadata")) info.metadata = info.header["metadata"];
  } catch (const Json::exception& e) {
    fail(CheckpointErrorKind::kMalformed, path, std::string("bad header: ") + e.what());
  }

  std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
  std::uint64_t sum = 0;
  for (const auto& e : info.tensors) {
    if (e.offset > info.payload_bytes || e.nbytes > info.payload_bytes - e.offset) {
      fail(CheckpointErrorKind::kMalformed, path, "tensor " + e.name + " lies outside the payload");
    }
    ranges.emplace_back(e.offset, e.offset + e.nbytes);
    sum += e.nbytes;
  }
  std::sort(ranges.begin(), ranges.end());
  for (std::size_t i = 1; i < ranges.size(); ++i) {
    if (ranges[i].first < ranges[i - 1].second) {
      fail(CheckpointErrorKind::kMalformed, path, "tensor byte ranges overlap");
    }
  }
  if (sum != info.payload_bytes) {
    fail(CheckpointErrorKind::kMalformed, path, "payload_bytes does not equal the sum of tensor sizes");
  }
  const std::uint64_t start = kPrefix + header_len;
  const std::uint64_t actual = bytes.size() - start;
  if (actual < info.payload_bytes) {
    fail(CheckpointErrorKind::kTruncated, path,
         "payload has " + std::to_string(actual) + " bytes, header declares " +
             std::to_string(info.payload_bytes));
  }
  if (actual > info.payload_bytes) {
    fail(CheckpointErrorKind::kMalformed, path, "trailing bytes after the payload");
  }
  *payload_start = start;
  return info;
}

// Validates every model tensor against the manifest, then fills them.
void fill_tensors(const CheckpointInfo& info, const std::vector<std::uint8_t>& bytes,
                  std::size_t payload_start, const std::vector<Slot>& slots, const fs::path& path) {
  std::map<std::string, const TensorEntry*, std::less<>> by_name;
  for (const auto& e : info.tensors) {
    if (!by_name.emplace(e.name, &e).second) {
      fail(CheckpointErrorKind::kMalformed, path, "duplicate tensor " + e.name);
    }
  }
  if (by_name.size() != slots.size()) {
    fail(CheckpointErrorKind::kMalformed, path,
         "header lists " + std::to_string(by_name.size()) + " tensors, model has " +
             std::to_string(slots.size()));
  }
  for (const auto& s : slots) {
    const auto it = by_name.find(s.name);
    if (it == by_name.end()) fail(CheckpointErrorKind::kMalformed, path, "missing tensor " + s.name);
    const auto& e = *it->second;
    if (e.shape != s.value->shape()) {
      fail(CheckpointErrorKind::kShapeMismatch, path,
           s.name + ": stored shape " + to_string(e.shape) + ", architecture needs " +
               to_string(s.value->shape()));
    }
    if (e.dtype != "f32") fail(CheckpointErrorKind::kMalformed, path, s.name + ": dtype " + e.dtype);
    if (e.nbytes != 4 * s.value->size()) {
      fail(CheckpointErrorKind::kMalformed, path, s.name + ": byte size does not match its shape");
    }
  }
  for (const auto& s : slots) {
    const auto& e = *by_name.at(s.name);
    const std::uint8_t* src = bytes.data() + payload_start + e.offset;
    for (std::size_t i = 0; i < s.value->size(); ++i) {
      (*s.value)[i] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(src + 4 * i, 4)));
    }
  }
}

template <typename Model, typename Build>
Model load_model(const fs::path& path, const char* kind, Json* metadata, Build&& build) {
  const auto bytes = read_file(path);
  std::size_t start = 0;
  const auto info = parse(bytes, path, &start);
  if (info.model_kind != kind) {
    fail(CheckpointErrorKind::kMalformed, path,
         "holds a " + info.model_kind + " model, expected " + kind);
  }
  std::optional<Model> model;
  try {
    model.emplace(build(info.header.at("config")));
  } catch (const Json::exception& e) {
    fail(CheckpointErrorKind::kMalformed, path, std::string("bad config: ") + e.what());
  } catch (const ConfigError& e) {
    fail(CheckpointErrorKind::kMalformed, path, std::string("bad config: ") + e.what());
  }
  fill_tensors(info, bytes, start, slots_of(model->params(), model->buffers()), path);
  if (metadata != nullptr) *metadata = info.metadata;
  return std::move(*model);
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const std::string& model_kind, const Json& config,
                                               const std::vector<nn::Param<float>*>& params,
                                               const std::vector<nn::Buffer<float>*>& buffers,
                                               const Json& metadata) {
  const auto slots = slots_of(params, buffers);
  Json tensors = Json::array();
  std::uint64_t offset = 0;
  for (const auto& s : slots) {
    const std::uint64_t nbytes = 4 * s.value->size();
    tensors.push_back({{"name", s.name},
                       {"shape", shape_json(s.value->shape())},
                       {"dtype", "f32"},
                       {"offset", offset},
                       {"nbytes", nbytes},
                       {"role", s.role}});
    offset += nbytes;
  }
  Json header = {{"format_version", kCheckpointVersion},
                 {"model_kind", model_kind},
                 {"config", config},
                 {"tensors", std::move(tensors)},
                 {"payload_bytes", offset}};
  if (!metadata.is_null()) header["metadata"] = metadata;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset);
  for (const auto& s : slots) {
    for (const float v : s.value->data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

void save_checkpoint(TransNetModel<float>& model, const fs::path& path, const Json& metadata) {
  write_file(path, serialize_checkpoint("transnet", to_json(model.config()), model.params(),
                                        model.buffers(), metadata));
}

void save_checkpoint(Autoencoder<float>& model, const fs::path& path, const Json& metadata) {
  const Json config = {{"backbone", to_json(model.config())}};
  write_file(path, serialize_checkpoint("autoencoder", config, model.params(), model.buffers(),
                                        metadata));
}

void save_checkpoint(FrameClassifier<float>& model, const fs::path& path, const Json& metadata) {
  const Json config = {{"classes", model.classes()},
                       {"backbone", to_json(model.backbone().config())}};
  write_file(path, serialize_checkpoint("frame_classifier", config, model.params(),
                                        model.buffers(), metadata));
}

CheckpointInfo read_checkpoint_info(const fs::path& path) {
  const auto bytes = read_file(path);
  std::size_t start = 0;
  return parse(bytes, path, &start);
}

TransNetModel<float> load_transnet(const fs::path& path, Json* metadata) {
  return load_model<TransNetModel<float>>(path, "transnet", metadata, [](const Json& c) {
    Rng rng(0);
    return TransNetModel<float>(transnet_config_from_json(c), rng);
  });
}

Autoencoder<float> load_autoencoder(const fs::path& path, Json* metadata) {
  return load_model<Autoencoder<float>>(path, "autoencoder", metadata, [](const Json& c) {
    Rng rng(0);
    return Autoencoder<float>(backbone_config_from_json(c.at("backbone")), rng);
  });
}

FrameClassifier<float> load_frame_classifier(const fs::path& path, Json* metadata) {
  return load_model<FrameClassifier<float>>(path, "frame_classifier", metadata, [](const Json& c) {
    Rng rng(0);
    return FrameClassifier<float>(backbone_config_from_json(c.at("backbone")),
                                  c.at("classes").get<std::size_t>(), rng);
  });
}

}  // namespace transnet
