#include <gtest/gtest.h>

#include <cstring>

#include "test_util.hpp"
#include "transnet/checkpoint.hpp"
#include "transnet/config_json.hpp"
#include "transnet/data.hpp"
#include "transnet/error.hpp"
#include "transnet/trainer.hpp"

namespace transnet {
namespace {

using testutil::read_bytes;
using testutil::TempDir;
using testutil::write_bytes;

// Rewrites the JSON header of a checkpoint file, fixing the length prefix.
void rewrite_header(const std::filesystem::path& path, const std::function<void(std::string&)>& edit) {
  auto bytes = read_bytes(path);
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 8);
  std::string header = bytes.substr(16, len);
  const std::string payload = bytes.substr(16 + len);
  edit(header);
  const std::uint64_t new_len = header.size();
  std::string out = bytes.substr(0, 8);
  out.append(reinterpret_cast<const char*>(&new_len), 8);
  out += header + payload;
  write_bytes(path, out);
}

CheckpointErrorKind load_error_kind(const std::filesystem::path& path) {
  try {
    load_transnet(path);
  } catch (const CheckpointError& e) {
    return e.checkpoint_kind();
  }
  ADD_FAILURE() << "load succeeded";
  return CheckpointErrorKind::kIo;
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(1);
    auto c = desk_config();
    c.head_activation = HeadActivation::kIdentity;
    model_ = std::make_unique<TransNetModel<float>>(c, rng);
    const auto ds = gen_action_dataset(1, 2, 8, 32, 32);
    auto [train, test] = split_dataset(ds, 0.5, 1);
    train_classifier(*model_, train, test, {1, 6, {}}, rng);
    path_ = dir_.path() / "model.tnet";
    save_checkpoint(*model_, path_, Json{{"note", "hello"}});
  }

  TempDir dir_;
  std::unique_ptr<TransNetModel<float>> model_;
  std::filesystem::path path_;
};

TEST_F(CheckpointTest, RoundtripIsBitExact) {
  Json meta;
  auto loaded = load_transnet(path_, &meta);
  EXPECT_EQ(loaded.config(), model_->config());
  EXPECT_EQ(meta["note"], "hello");
  const auto a = model_->params();
  const auto b = loaded.params();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i]->name, b[i]->name);
    EXPECT_EQ(std::memcmp(a[i]->value.raw(), b[i]->value.raw(), a[i]->value.size() * 4), 0);
  }
  // saving the loaded model reproduces the file byte for byte
  save_checkpoint(loaded, dir_.path() / "again.tnet", meta);
  EXPECT_EQ(read_bytes(path_), read_bytes(dir_.path() / "again.tnet"));
  Tensor clip({8, 3, 32, 32}, 0.3f);
  EXPECT_EQ(loaded.predict(clip), model_->predict(clip));
}

TEST_F(CheckpointTest, ContainerLayout) {
  const auto bytes = read_bytes(path_);
  EXPECT_EQ(bytes.substr(0, 4), "TNET");
  std::uint32_t version = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  EXPECT_EQ(version, kCheckpointVersion);
  const auto info = read_checkpoint_info(path_);
  EXPECT_EQ(info.model_kind, "transnet");
  EXPECT_EQ(16 + info.header_text.size() + info.payload_bytes, bytes.size());
  std::uint64_t expect_offset = 0;
  for (const auto& t : info.tensors) {
    EXPECT_EQ(t.offset, expect_offset);
    EXPECT_EQ(t.nbytes, 4 * shape_numel(t.shape));
    EXPECT_EQ(t.dtype, "f32");
    expect_offset += t.nbytes;
  }
  EXPECT_EQ(expect_offset, info.payload_bytes);
  EXPECT_EQ(Json::parse(info.header_text), info.header);
}

TEST_F(CheckpointTest, BadMagic) {
  auto bytes = read_bytes(path_);
  bytes[0] = 'X';
  write_bytes(path_, bytes);
  EXPECT_EQ(load_error_kind(path_), CheckpointErrorKind::kBadMagic);
}

TEST_F(CheckpointTest, VersionMismatch) {
  auto bytes = read_bytes(path_);
  bytes[4] = 9;
  write_bytes(path_, bytes);
  EXPECT_EQ(load_error_kind(path_), CheckpointErrorKind::kVersionMismatch);
}

TEST_F(CheckpointTest, TruncatedByOneByte) {
  auto bytes = read_bytes(path_);
  bytes.pop_back();
  write_bytes(path_, bytes);
  EXPECT_EQ(load_error_kind(path_), CheckpointErrorKind::kTruncated);
}

TEST_F(CheckpointTest, TruncatedInsideHeader) {
  write_bytes(path_, read_bytes(path_).substr(0, 40));
  EXPECT_EQ(load_error_kind(path_), CheckpointErrorKind::kTruncated);
}

TEST_F(CheckpointTest, EditedShapeIsShapeMismatch) {
  rewrite_header(path_, [](std::string& h) {
    const auto pos = h.find("\"shape\":[8,3,3,3]");
    ASSERT_NE(pos, std::string::npos);
    h.replace(pos, 17, "\"shape\":[3,8,3,3]");
  });
  EXPECT_EQ(load_error_kind(path_), CheckpointErrorKind::kShapeMismatch);
}

TEST_F(CheckpointTest, MalformedHeader) {
  rewrite_header(path_, [](std::string& h) { h[h.size() / 2] = '{'; });
  EXPECT_EQ(load_error_kind(path_), CheckpointErrorKind::kMalformed);
}

TEST_F(CheckpointTest, WrongModelKind) {
  EXPECT_THROW(load_autoencoder(path_), CheckpointError);
  EXPECT_THROW(load_frame_classifier(path_), CheckpointError);
}

TEST_F(CheckpointTest, DistinctErrorTags) {
  std::set<std::string> kinds;
  for (auto k : {CheckpointErrorKind::kBadMagic, CheckpointErrorKind::kVersionMismatch,
                 CheckpointErrorKind::kTruncated, CheckpointErrorKind::kShapeMismatch,
                 CheckpointErrorKind::kMalformed, CheckpointErrorKind::kIo}) {
    kinds.insert(CheckpointError(k, "x").kind());
  }
  EXPECT_EQ(kinds.size(), 6u);
  EXPECT_EQ(load_error_kind(dir_.path() / "missing.tnet"), CheckpointErrorKind::kIo);
}

TEST(CheckpointOther, AutoencoderAndFrameClassifierRoundtrip) {
  TempDir dir;
  Rng rng(2);
  auto bb = toy_backbone_config();
  bb.use_batchnorm = true;
  Autoencoder<float> ae(bb, rng);
  for (auto* b : ae.buffers()) {
    for (auto& v : b->value.data()) v = static_cast<float>(rng.uniform());
  }
  save_checkpoint(ae, dir.path() / "ae.tnet");
  auto ae2 = load_autoencoder(dir.path() / "ae.tnet");
  Tensor image({3, 32, 32}, 0.6f);
  EXPECT_EQ(ae.forward(image), ae2.forward(image));
  const auto b1 = ae.buffers();
  const auto b2 = ae2.buffers();
  ASSERT_EQ(b1.size(), b2.size());
  for (std::size_t i = 0; i < b1.size(); ++i) EXPECT_EQ(b1[i]->value, b2[i]->value);

  FrameClassifier<float> fc(toy_backbone_config(), 6, rng);
  save_checkpoint(fc, dir.path() / "fc.tnet");
  auto fc2 = load_frame_classifier(dir.path() / "fc.tnet");
  Tensor batch({1, 3, 32, 32}, 0.6f);
  EXPECT_EQ(fc.predict(batch), fc2.predict(batch));
}

TEST(CheckpointOther, TransferThenSaveLoadKeepsEncoderWeights) {
  TempDir dir;
  Rng rng(3);
  Autoencoder<float> ae(toy_backbone_config(), rng);
  for (auto* p : ae.encoder().params()) {
    for (auto& v : p->value.data()) v *= 1.5f;
  }
  TransNetModel<float> model(desk_config(), rng);
  transfer_encoder(ae, model);
  save_checkpoint(model, dir.path() / "m.tnet");
  auto loaded = load_transnet(dir.path() / "m.tnet");
  const auto enc = ae.encoder().params();
  const auto bb = loaded.backbone().params();
  for (std::size_t i = 0; i < bb.size(); ++i) EXPECT_EQ(bb[i]->value, enc[i]->value);
}

// ---------------------------------------------------------------------------
// config JSON

TEST(ConfigJson, Roundtrip) {
  auto c = desk_config();
  c.kernels = 12;
  c.head_activation = HeadActivation::kIdentity;
  c.backbone.use_batchnorm = true;
  EXPECT_EQ(transnet_config_from_json(to_json(c)), c);
  OptimizerConfig o{OptimizerKind::kSgdMomentum, 0.05, 0.8};
  EXPECT_EQ(optimizer_config_from_json(to_json(o)), o);
}

TEST(ConfigJson, PartialObjectsKeepDefaults) {
  const auto c = transnet_config_from_json(Json::parse(R"({"frames": 12})"));
  EXPECT_EQ(c.frames, 12u);
  EXPECT_EQ(c.kernels, desk_config().kernels);
  const auto bb = backbone_config_from_json(Json::parse(R"({"preset": "mobilenet_v1", "input_size": 128})"));
  EXPECT_EQ(bb.input_height, 128u);
  EXPECT_EQ(bb.latent_dim(), 1024u);
}

TEST(ConfigJson, Errors) {
  EXPECT_THROW(transnet_config_from_json(Json::parse(R"({"frame": 12})")), ConfigError);
  EXPECT_THROW(transnet_config_from_json(Json::parse(R"({"frames": "twelve"})")), ConfigError);
  EXPECT_THROW(transnet_config_from_json(Json::parse(R"({"head_activation": "tanh"})")), ConfigError);
  EXPECT_THROW(backbone_config_from_json(Json::parse(R"({"preset": "resnet"})")), ConfigError);
  EXPECT_THROW(backbone_config_from_json(Json::parse(R"({"blocks": [{"filters": 8, "strid": 1}]})")),
               ConfigError);
}

}  // namespace
}  // namespace transnet
