#include <gtest/gtest.h>

#include <cmath>

#include "transnet/autoencoder.hpp"
#include "transnet/data.hpp"
#include "transnet/error.hpp"
#include "transnet/frame_classifier.hpp"
#include "transnet/gradcheck.hpp"
#include "transnet/parallel.hpp"
#include "transnet/trainer.hpp"

namespace transnet {
namespace {

template <typename T>
std::vector<BasicTensor<T>> snapshot(const std::vector<nn::Param<T>*>& params) {
  std::vector<BasicTensor<T>> out;
  for (const auto* p : params) out.push_back(p->value);
  return out;
}

template <typename T>
bool same_values(const std::vector<nn::Param<T>*>& params, const std::vector<BasicTensor<T>>& s) {
  if (params.size() != s.size()) return false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!(params[i]->value == s[i])) return false;
  }
  return true;
}

TransNetConfig trainable_desk() {
  auto c = desk_config();
  c.head_activation = HeadActivation::kIdentity;
  return c;
}

// ---------------------------------------------------------------------------
// autoencoder

TEST(Autoencoder, ToyGeometry) {
  Rng rng(1);
  Autoencoder<float> ae(toy_backbone_config(), rng);
  EXPECT_EQ(ae.upsample_stages(), 3u);
  const auto y = ae.forward(Tensor({3, 32, 32}, 0.5f));
  EXPECT_EQ(y.shape(), (Shape{1, 32, 32}));
  EXPECT_TRUE(all_finite(y));
  EXPECT_EQ(ae.forward(Tensor({2, 3, 32, 32}, 0.5f)).shape(), (Shape{2, 1, 32, 32}));
}

TEST(Autoencoder, OddStrideTwoInputIsConfigError) {
  auto c = toy_backbone_config();
  c.input_height = c.input_width = 30;  // 30 -> 15 -> 8 cannot be undone by x2 upsampling
  Rng rng(2);
  EXPECT_THROW(Autoencoder<float>(c, rng), ConfigError);
}

TEST(Autoencoder, EncoderInitMatchesStandaloneBackbone) {
  Rng a(3), b(3);
  Autoencoder<float> ae(toy_backbone_config(), a);
  Backbone<float> bb(toy_backbone_config(), b);
  const auto pa = ae.encoder().params();
  const auto pb = bb.params();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->name, pb[i]->name);
    EXPECT_EQ(pa[i]->value, pb[i]->value);
  }
}

TEST(Autoencoder, GradientsMatchFiniteDifferences) {
  BackboneConfig c;
  c.input_height = c.input_width = 8;
  c.stem_filters = 3;
  c.blocks = {{4, 1}, {4, 2}};
  Rng rng(4);
  Autoencoder<double> ae(c, rng);
  // zero-initialized biases put dead ReLU regions exactly on the kink
  for (auto* p : ae.params()) {
    if (p->name.ends_with("bias")) {
      for (auto& v : p->value.data()) v = rng.uniform(0.05, 0.2);
    }
  }
  TensorD x({2, 3, 8, 8});
  for (auto& v : x.data()) v = rng.uniform();
  TensorD r({2, 1, 8, 8});
  for (auto& v : r.data()) v = rng.uniform(-1, 1);
  GradCheckProblem<double> problem;
  problem.params = ae.params();
  problem.evaluate = [&](bool with_grad) {
    AutoencoderTrace<double> trace;
    const auto y = ae.forward_train(x, trace);
    double loss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) loss += r[i] * y[i];
    if (with_grad) ae.backward(trace, r);
    return loss;
  };
  const auto report = grad_check(problem, 200, 1e-4, 1e-3, 4);
  EXPECT_GE(report.checked, 200u);
  EXPECT_TRUE(report.passed()) << report.max_rel_error;
  for (const auto& f : report.failures) ADD_FAILURE() << f.param << "[" << f.index << "] " << f.analytic << " vs " << f.numeric;
}

TEST(MeanIou, HandCases) {
  // prediction = logit >= 0
  const Tensor logits({2, 1, 1, 4}, {1, 1, -1, -1, -1, -1, -1, -1});
  const Tensor masks({2, 1, 1, 4}, {1, 0, 1, 0, 0, 0, 0, 0});
  // image 0: inter 1, union 3; image 1: both empty -> 1
  EXPECT_NEAR(mean_iou(logits, masks), 0.5 * (1.0 / 3.0 + 1.0), 1e-12);
  EXPECT_EQ(mean_iou(Tensor({1, 1, 2, 2}, 1.0f), Tensor({1, 1, 2, 2}, 1.0f)), 1.0);
  EXPECT_EQ(mean_iou(Tensor({1, 1, 2, 2}, -1.0f), Tensor({1, 1, 2, 2}, 1.0f)), 0.0);
  EXPECT_THROW(mean_iou(Tensor({1, 1, 2, 2}), Tensor({1, 1, 2, 3})), ShapeError);
}

TEST(SegTraining, ZeroEpochsIsNoOp) {
  Rng rng(5);
  Autoencoder<float> ae(toy_backbone_config(), rng);
  const auto before = snapshot(ae.params());
  const auto data = gen_segmentation_dataset(1, 8, 32, 32);
  const auto log = train_segmentation(ae, data, nullptr, {0, 4, {}}, rng);
  EXPECT_TRUE(log.epochs.empty());
  EXPECT_TRUE(same_values(ae.params(), before));
}

TEST(SegTraining, EmptyDataIsDataError) {
  Rng rng(6);
  Autoencoder<float> ae(toy_backbone_config(), rng);
  SegDataset empty;
  EXPECT_THROW(train_segmentation(ae, empty, nullptr, {1, 4, {}}, rng), DataError);
}

TEST(SegTraining, DeterministicLossCurve) {
  const auto data = gen_segmentation_dataset(2, 24, 32, 32);
  const auto run = [&] {
    Rng rng(7);
    Autoencoder<float> ae(toy_backbone_config(), rng);
    return train_segmentation(ae, data, nullptr, {2, 8, {OptimizerKind::kAdam, 3e-3}}, rng);
  };
  const auto a = run();
  const auto b = run();
  ASSERT_EQ(a.epochs.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(a.epochs[i].train_loss, b.epochs[i].train_loss);
    EXPECT_EQ(a.epochs[i].train_iou, b.epochs[i].train_iou);
  }
}

TEST(SegTraining, LossDecreasesOverFirstEpochs) {
  const auto data = gen_segmentation_dataset(3, 96, 32, 32);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    Rng rng(seed);
    Autoencoder<float> ae(toy_backbone_config(), rng);
    const auto log = train_segmentation(ae, data, nullptr, {5, 24, {OptimizerKind::kAdam, 3e-3}}, rng);
    int flat = 0;
    for (std::size_t i = 1; i < log.epochs.size(); ++i) {
      flat += log.epochs[i].train_loss >= log.epochs[i - 1].train_loss;
    }
    EXPECT_LE(flat, 1) << "seed " << seed;
  }
}

TEST(Transfer, CopiesEveryEncoderTensorAndMatchesFeatures) {
  Rng rng(8);
  Autoencoder<float> ae(toy_backbone_config(), rng);
  for (auto* p : ae.encoder().params()) {
    for (auto& v : p->value.data()) v += 0.01f;
  }
  TransNetModel<float> model(desk_config(), rng);
  const auto copied = transfer_encoder(ae, model);
  EXPECT_EQ(copied, model.backbone().params().size());
  Tensor image({3, 32, 32});
  for (auto& v : image.data()) v = static_cast<float>(rng.uniform());
  EXPECT_EQ(model.backbone().features(image), ae.encoder().features(image));
  EXPECT_EQ(model.backbone().forward(image), ae.encoder().forward(image));
}

TEST(Transfer, MismatchIsAtomic) {
  Rng rng(9);
  auto other = toy_backbone_config();
  other.blocks.back().filters = 48;
  Autoencoder<float> ae(other, rng);
  TransNetModel<float> model(desk_config(), rng);
  const auto before = snapshot(model.params());
  EXPECT_THROW(transfer_encoder(ae, model), TransferError);
  EXPECT_TRUE(same_values(model.params(), before));

  auto shaped = toy_backbone_config();
  shaped.blocks[0].filters = 12;  // same latent, different inner shapes
  Autoencoder<float> ae2(shaped, rng);
  EXPECT_THROW(transfer_encoder(ae2, model), TransferError);
  EXPECT_TRUE(same_values(model.params(), before));
}

// ---------------------------------------------------------------------------
// frame classifier

TEST(FrameClassifier, ShapesAndTraining) {
  Rng rng(10);
  FrameClassifier<float> fc(toy_backbone_config(), 6, rng);
  const auto images = gen_shape_classification_dataset(1, 6, 32, 32);
  Tensor batch({2, 3, 32, 32}, 0.2f);
  const auto p = fc.predict(batch);
  EXPECT_EQ(p.shape(), (Shape{2, 6}));
  const auto log = train_frame_classifier(fc, images, nullptr, {3, 12, {OptimizerKind::kAdam, 3e-3}}, rng);
  ASSERT_EQ(log.epochs.size(), 3u);
  EXPECT_LT(log.epochs.back().train_loss, log.epochs.front().train_loss);
  const double acc = evaluate_frames(fc, images);
  EXPECT_GE(acc, 0.0);
  EXPECT_LE(acc, 1.0);
}

TEST(FrameClassifier, BackboneTransfers) {
  Rng rng(11);
  FrameClassifier<float> fc(toy_backbone_config(), 6, rng);
  TransNetModel<float> model(desk_config(), rng);
  EXPECT_EQ(transfer_backbone(fc.backbone(), model.backbone()), model.backbone().params().size());
  Tensor image({3, 32, 32}, 0.4f);
  EXPECT_EQ(model.backbone().forward(image), fc.backbone().forward(image));
}

// ---------------------------------------------------------------------------
// classifier training and evaluation

struct SmallData {
  ClipDataset train;
  ClipDataset test;
};

const SmallData& small_data() {
  static const SmallData d = [] {
    const auto ds = gen_action_dataset(1, 4, 8, 32, 32);
    auto [train, test] = split_dataset(ds, 0.5, 1);
    return SmallData{std::move(train), std::move(test)};
  }();
  return d;
}

TEST(Trainer, ZeroEpochsIsNoOp) {
  Rng rng(12);
  TransNetModel<float> model(trainable_desk(), rng);
  const auto before = snapshot(model.params());
  const auto log = train_classifier(model, small_data().train, small_data().test, {0, 16, {}}, rng);
  EXPECT_TRUE(log.epochs.empty());
  EXPECT_TRUE(same_values(model.params(), before));
}

TEST(Trainer, GeometryMismatchThrowsBeforeTraining) {
  Rng rng(13);
  auto c = trainable_desk();
  c.frames = 6;
  TransNetModel<float> model(c, rng);
  const auto before = snapshot(model.params());
  EXPECT_THROW(train_classifier(model, small_data().train, small_data().test, {1, 16, {}}, rng),
               ShapeError);
  EXPECT_TRUE(same_values(model.params(), before));
  auto c2 = trainable_desk();
  c2.classes = 4;
  EXPECT_THROW(check_compatible(c2, small_data().train), Error);
}

TEST(Trainer, LogShapeAndCsv) {
  Rng rng(14);
  TransNetModel<float> model(trainable_desk(), rng);
  const auto log = train_classifier(model, small_data().train, small_data().test, {2, 8, {}}, rng);
  ASSERT_EQ(log.epochs.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(log.epochs[i].epoch, i + 1);
    EXPECT_GE(log.epochs[i].train_acc, 0.0);
    EXPECT_LE(log.epochs[i].train_acc, 1.0);
    EXPECT_GE(log.epochs[i].test_acc, 0.0);
    EXPECT_LE(log.epochs[i].test_acc, 1.0);
  }
  const auto csv = log.to_csv(false);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,train_loss,train_acc,test_acc,seconds");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  const auto last = csv.substr(csv.rfind(',', csv.size() - 2) + 1);
  EXPECT_EQ(std::stod(last), 0.0);
}

TEST(Trainer, SeedReproducesLogAndWeights) {
  const auto run = [] {
    Rng rng(15);
    TransNetModel<float> model(trainable_desk(), rng);
    auto log = train_classifier(model, small_data().train, small_data().test, {2, 8, {}}, rng);
    return std::make_pair(log.to_csv(false), snapshot(model.params()));
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Trainer, ThreadCountDoesNotChangeResults) {
  const auto run = [](int threads) {
    set_thread_count(threads);
    Rng rng(16);
    TransNetModel<float> model(trainable_desk(), rng);
    auto log = train_classifier(model, small_data().train, small_data().test, {2, 8, {}}, rng);
    set_thread_count(1);
    return std::make_pair(log.to_csv(false), snapshot(model.params()));
  };
  const auto single = run(1);
  const auto multi = run(3);
  EXPECT_EQ(single.first, multi.first);
  EXPECT_EQ(single.second, multi.second);
}

TEST(Evaluate, ConfusionCountsAndPerfectLabels) {
  Rng rng(17);
  TransNetModel<float> model(trainable_desk(), rng);
  auto ds = small_data().test;
  const auto r = evaluate(model, ds);
  std::size_t total = 0, diag = 0;
  for (std::size_t t = 0; t < r.confusion.size(); ++t) {
    for (std::size_t p = 0; p < r.confusion[t].size(); ++p) total += r.confusion[t][p];
    diag += r.confusion[t][t];
  }
  EXPECT_EQ(total, ds.items.size());
  EXPECT_EQ(diag, r.correct);
  EXPECT_DOUBLE_EQ(r.accuracy, static_cast<double>(r.correct) / static_cast<double>(total));

  // relabel with the model's own predictions: everything is correct
  const auto pred = predict_labels(model, ds);
  for (std::size_t i = 0; i < ds.items.size(); ++i) ds.items[i].label = pred[i];
  const auto perfect = evaluate(model, ds);
  EXPECT_EQ(perfect.accuracy, 1.0);
  for (std::size_t t = 0; t < perfect.confusion.size(); ++t) {
    for (std::size_t p = 0; p < perfect.confusion.size(); ++p) {
      if (t != p) EXPECT_EQ(perfect.confusion[t][p], 0u);
    }
  }
}

TEST(Evaluate, UntrainedModelIsNearChance) {
  Rng rng(18);
  TransNetModel<float> model(trainable_desk(), rng);
  const auto ds = gen_action_dataset(5, 50, 8, 32, 32);
  EXPECT_NEAR(evaluate(model, ds).accuracy, 1.0 / 6.0, 0.1);
}

TEST(Evaluate, EmptyDatasetIsDataError) {
  Rng rng(19);
  TransNetModel<float> model(trainable_desk(), rng);
  ClipDataset empty = small_data().test;
  empty.items.clear();
  EXPECT_THROW(evaluate(model, empty), DataError);
}

TEST(Argmax, TiesGoToLowestIndex) {
  const std::vector<float> v{0.2f, 0.4f, 0.4f};
  EXPECT_EQ(argmax(std::span<const float>(v)), 1u);
}

}  // namespace
}  // namespace transnet
