// Runs the eleven acceptance criteria and prints one PASS/FAIL line each.
// Usage: transnet_acceptance [--experiments DIR] [--only N]...
// Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "test_util.hpp"
#include "transnet/autoencoder.hpp"
#include "transnet/checkpoint.hpp"
#include "transnet/cli/experiment.hpp"
#include "transnet/data.hpp"
#include "transnet/error.hpp"
#include "transnet/gradcheck.hpp"
#include "transnet/nn/layers.hpp"
#include "transnet/nn/ops.hpp"
#include "transnet/parallel.hpp"
#include "transnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace transnet;
using cli::Arm;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  const int n = std::snprintf(nullptr, 0, f, args...);
  std::string s(static_cast<std::size_t>(n) + 1, '\0');
  std::snprintf(s.data(), s.size(), f, args...);
  s.resize(static_cast<std::size_t>(n));
  return s;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

TensorD random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  TensorD t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

Tensor random_clip(Rng& rng, const TransNetConfig& c) {
  const auto& b = c.backbone;
  Tensor t({c.frames, b.input_channels, b.input_height, b.input_width});
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform());
  return t;
}

oracle::Image as_image(const TensorD& t) { return {t.dim(0), t.dim(1), t.dim(2), t.vec()}; }

fs::path g_experiments;

cli::ExperimentSpec manifest(const char* name) { return cli::load_spec(g_experiments / name); }

// ---------------------------------------------------------------------------

Outcome gradient_integrity() {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr double kEps = 1e-4, kTol = 1e-3;
  std::vector<std::string> bad;
  double worst = 0.0;
  std::size_t layers = 0;
  auto check = [&](const std::string& name, const GradCheckProblem<double>& problem) {
    const auto r = grad_check(problem, 120, kEps, kTol, 1);
    worst = std::max(worst, r.max_rel_error);
    ++layers;
    if (!r.passed() || r.checked < 100) bad.push_back(name);
  };
  Rng rng(1);
  {
    nn::Conv2d<double> conv("conv", 2, 3, 3, {2, 1}, rng);
    auto lp = layer_problem(conv, random_tensor(rng, {2, 2, 6, 6}), 2);
    check("conv2d", lp.problem);
  }
  {
    nn::DepthwiseConv2d<double> dw("dw", 3, 3, {2, 1}, rng);
    auto lp = layer_problem(dw, random_tensor(rng, {2, 3, 6, 6}), 3);
    check("depthwise", lp.problem);
  }
  {
    nn::BatchNorm2d<double> bn("bn", 3);
    auto lp = layer_problem(bn, random_tensor(rng, {4, 3, 3, 3}), 4);
    check("batchnorm", lp.problem);
  }
  {
    nn::ReLU<double> relu;
    auto lp = layer_problem(relu, random_tensor(rng, {3, 3, 4, 4}), 5);
    check("relu", lp.problem);
  }
  {
    nn::GlobalAvgPool<double> pool;
    auto lp = layer_problem(pool, random_tensor(rng, {3, 4, 4, 3}), 6);
    check("pool", lp.problem);
  }
  {
    nn::UpsampleNearest2x<double> up;
    auto lp = layer_problem(up, random_tensor(rng, {2, 3, 5, 4}), 7);
    check("upsample", lp.problem);
  }
  {
    nn::Param<double> seq("seq", random_tensor(rng, {8, 6}));
    nn::Param<double> kern("kernels", random_tensor(rng, {4, 3, 6}));
    nn::Param<double> bias("bias", random_tensor(rng, {4}));
    const auto r = random_tensor(rng, {6, 4});
    GradCheckProblem<double> problem;
    problem.params = {&seq, &kern, &bias};
    problem.evaluate = [&](bool with_grad) {
      const auto y = nn::conv1d_forward(seq.value, kern.value, bias.value);
      double loss = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) loss += r[i] * y[i];
      if (with_grad) {
        const auto g = nn::conv1d_backward(seq.value, kern.value, r);
        seq.accumulate(g.input);
        kern.accumulate(g.weight);
        bias.accumulate(g.bias);
      }
      return loss;
    };
    check("conv1d", problem);
  }
  const auto toy = run_toy_gradcheck(200, kEps, kTol, 7);
  worst = std::max(worst, toy.report.max_rel_error);
  if (!toy.report.passed() || toy.report.checked < 200) bad.push_back("toy transnet");
  const double secs = seconds_since(t0);
  if (secs >= 120.0) bad.push_back("runtime");
  std::string detail = fmt("%zu layer types + toy model (%zu of %zu params), max rel %.2e, %.1fs",
                           layers, toy.report.checked, toy.param_count, worst, secs);
  for (const auto& b : bad) detail += "; failed " + b;
  return {bad.empty(), detail};
}

Outcome convolution_oracles() {
  Rng rng(2);
  std::size_t instances = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial, ++instances) {
    const std::size_t cin = 1 + rng.below(3), cout = 1 + rng.below(4), k = 1 + 2 * rng.below(2);
    const std::size_t stride = 1 + rng.below(2), pad = rng.below(2);
    const auto x = random_tensor(rng, {cin, k + rng.below(5), k + rng.below(5)});
    const auto w = random_tensor(rng, {cout, cin, k, k});
    const auto b = random_tensor(rng, {cout});
    const auto y = nn::conv2d_forward(x, w, b, {stride, pad});
    const auto ref = oracle::conv2d(as_image(x), w.vec(), b.vec(), cout, k, stride, pad);
    if (y.size() != ref.v.size()) return {false, "conv2d output size mismatch"};
    for (std::size_t i = 0; i < y.size(); ++i) worst = std::max(worst, oracle::strict_rel(y[i], ref.v[i]));
  }
  for (int trial = 0; trial < 100; ++trial, ++instances) {
    const std::size_t c = 1 + rng.below(4), k = 1 + 2 * rng.below(2);
    const std::size_t stride = 1 + rng.below(2), pad = rng.below(2);
    const auto x = random_tensor(rng, {c, k + rng.below(5), k + rng.below(5)});
    const auto w = random_tensor(rng, {c, k, k});
    const auto b = random_tensor(rng, {c});
    const auto y = nn::depthwise_conv2d_forward(x, w, b, {stride, pad});
    const auto ref = oracle::depthwise(as_image(x), w.vec(), b.vec(), k, stride, pad);
    if (y.size() != ref.v.size()) return {false, "depthwise output size mismatch"};
    for (std::size_t i = 0; i < y.size(); ++i) worst = std::max(worst, oracle::strict_rel(y[i], ref.v[i]));
  }
  for (int trial = 0; trial < 100; ++trial, ++instances) {
    const std::size_t t = 2 + rng.below(11), l = 1 + rng.below(8), kc = 1 + rng.below(6);
    const std::size_t s = 1 + rng.below(t);
    const auto seq = random_tensor(rng, {t, l});
    const auto k = random_tensor(rng, {kc, s, l});
    const auto b = random_tensor(rng, {kc});
    const auto y = nn::conv1d_forward(seq, k, b);
    const auto ref = oracle::conv1d(seq.vec(), t, l, k.vec(), kc, s, b.vec());
    if (y.size() != ref.size()) return {false, "conv1d output size mismatch"};
    for (std::size_t i = 0; i < y.size(); ++i) worst = std::max(worst, oracle::strict_rel(y[i], ref[i]));
  }
  return {worst <= 1e-6, fmt("%zu instances, max rel %.2e (limit 1e-6)", instances, worst)};
}

Outcome shape_contract() {
  Rng rng(3);
  double worst_sum = 0.0;
  for (std::size_t n : {2u, 3u, 8u, 12u}) {
    auto c = desk_config();
    c.frames = n;
    TransNetModel<float> model(c, rng);
    const auto l = c.backbone.latent_dim();
    const auto clip = random_clip(rng, c);
    const auto z = model.time_distributed(clip);
    const auto head = model.temporal_head(z);
    if (z.shape() != Shape{n, l}) return {false, fmt("n=%zu: latents %s", n, to_string(z.shape()).c_str())};
    if (head.hidden.shape() != Shape{n - 1, c.kernels}) return {false, fmt("n=%zu: hidden shape", n)};
    if (head.logits.shape() != Shape{c.classes} || head.probs.shape() != Shape{c.classes}) {
      return {false, fmt("n=%zu: logit shape", n)};
    }
    // the training path must agree on the contract
    Tensor batch({2, n, c.backbone.input_channels, c.backbone.input_height, c.backbone.input_width});
    for (auto& v : batch.data()) v = static_cast<float>(rng.uniform());
    TransNetTrace<float> trace;
    const auto probs = model.forward_train(batch, trace);
    if (probs.shape() != Shape{2, c.classes} || trace.latents.size() != 2 ||
        trace.latents[0].shape() != Shape{n, l} || trace.heads[1].hidden.shape() != Shape{n - 1, c.kernels}) {
      return {false, fmt("n=%zu: training trace shapes", n)};
    }
    double sum = 0.0;
    for (float p : head.probs.data()) sum += p;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
  }
  return {worst_sum <= 1e-6, fmt("n in {2,3,8,12}: [n,L], [n-1,K], [C]; max |sum p - 1| %.1e", worst_sum)};
}

Outcome weight_sharing() {
  auto c2 = desk_config();
  c2.frames = 2;
  auto c12 = desk_config();
  c12.frames = 12;
  Rng rng(4);
  TransNetModel<float> m2(c2, rng);
  TransNetModel<float> m12(c12, rng);
  const auto p2 = m2.backbone().param_count();
  const auto p12 = m12.backbone().param_count();
  const auto clip = random_clip(rng, c12);
  const auto z = m12.time_distributed(clip);
  const std::size_t frame = shape_numel(m12.backbone().frame_shape());
  const std::size_t l = c12.backbone.latent_dim();
  std::size_t mismatched = 0;
  for (std::size_t i = 0; i < c12.frames; ++i) {
    Tensor f(m12.backbone().frame_shape(),
             std::vector<float>(clip.raw() + i * frame, clip.raw() + (i + 1) * frame));
    const auto alone = m12.backbone().forward(f);
    if (std::memcmp(alone.raw(), z.raw() + i * l, l * sizeof(float)) != 0) ++mismatched;
  }
  return {p2 == p12 && mismatched == 0,
          fmt("backbone params n=2: %zu, n=12: %zu; %zu of 12 frames differ from standalone", p2, p12,
              mismatched)};
}

Outcome overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto spec = manifest("generalization.json");
  const auto& c = spec.model;
  const auto ds = gen_action_dataset(1, 10, c.frames, c.backbone.input_height, c.backbone.input_width);
  Rng rng(1);
  TransNetModel<float> model(c, rng);
  std::size_t reached = 0;
  double best = 0.0;
  // test set = training set, so test_acc is eval-mode training accuracy
  train_classifier(model, ds, ds, {100, spec.batch_size, spec.optimizer}, rng,
                   [&](const EpochRecord& e) {
                     best = std::max(best, e.test_acc);
                     if (reached == 0 && e.test_acc >= 0.95) reached = e.epoch;
                   });
  const double secs = seconds_since(t0);
  return {reached > 0 && secs < 600.0,
          fmt("%zu clips, train acc >= 0.95 at epoch %zu (best %.3f), %.0fs", ds.items.size(), reached,
              best, secs)};
}

Outcome generalization() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto spec = manifest("generalization.json");
  const auto data = cli::prepare_data(spec);
  std::string accs;
  bool ok = true;
  for (auto seed : spec.seeds) {
    const auto r = cli::run_arm(spec, data, Arm::kNone, seed, {});
    ok = ok && r.final_eval.accuracy >= 0.9;
    accs += fmt("%s%.3f", accs.empty() ? "" : " ", r.final_eval.accuracy);
  }
  const double secs = seconds_since(t0);
  return {ok && spec.seeds.size() >= 3 && secs < 1800.0,
          fmt("%zu/%zu clips, test acc per seed [%s] (need >= 0.90 each), %.0fs", data.train.items.size(),
              data.test.items.size(), accs.c_str(), secs)};
}

Outcome transfer_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto spec = manifest("transfer.json");
  const auto data = cli::prepare_data(spec);
  const std::size_t s = spec.seeds.size();
  std::vector<double> none(s), cls(s), seg(s);
  for (std::size_t i = 0; i < s; ++i) {
    none[i] = cli::run_arm(spec, data, Arm::kNone, spec.seeds[i], {}).final_eval.accuracy;
    cls[i] = cli::run_arm(spec, data, Arm::kClassification, spec.seeds[i], {}).final_eval.accuracy;
    seg[i] = cli::run_arm(spec, data, Arm::kSegmentation, spec.seeds[i], {}).final_eval.accuracy;
  }
  const double mn = cli::mean_and_stddev(none).first;
  const double mc = cli::mean_and_stddev(cls).first;
  const double ms = cli::mean_and_stddev(seg).first;
  std::size_t ordered = 0;
  std::string per_seed;
  for (std::size_t i = 0; i < s; ++i) {
    if (seg[i] >= cls[i] && cls[i] >= none[i]) ++ordered;
    per_seed += fmt(" seed %llu %.3f/%.3f/%.3f;", static_cast<unsigned long long>(spec.seeds[i]), seg[i],
                    cls[i], none[i]);
  }
  const bool ok = ms >= mc && mc >= mn && ms - mn >= 0.05 && ordered >= 2;
  return {ok, fmt("mean seg %.3f, cls %.3f, none %.3f; seg-none %+.1f pts; ordered on %zu of %zu seeds "
                  "(seg/cls/none:%s) %.0fs",
                  ms, mc, mn, 100.0 * (ms - mn), ordered, s, per_seed.c_str(), seconds_since(t0))};
}

Outcome autoencoder_quality() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto spec = manifest("transfer.json");
  const auto& bb = spec.model.backbone;
  constexpr std::size_t kPairs = 200, kHeldout = 40;
  auto all = gen_segmentation_dataset(1, kPairs + kHeldout, bb.input_height, bb.input_width);
  SegDataset train = all;
  train.items.resize(kPairs);
  SegDataset heldout = all;
  heldout.items.erase(heldout.items.begin(), heldout.items.begin() + kPairs);
  Rng rng(1);
  const auto r = cli::pretrain_segmentation(bb, spec.segmentation, train, &heldout, rng);
  const double iou = evaluate_segmentation(r.model, heldout);
  return {iou >= 0.80 && spec.segmentation.epochs <= 30,
          fmt("held-out IoU %.3f on %zu pairs after %zu epochs (need >= 0.80), %.0fs", iou, kHeldout,
              spec.segmentation.epochs, seconds_since(t0))};
}

// Rewrites the JSON header of a checkpoint file, fixing the length prefix.
void rewrite_header(const fs::path& path, const std::function<void(std::string&)>& edit) {
  auto bytes = testutil::read_bytes(path);
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, 8);
  std::string header = bytes.substr(16, len);
  const std::string payload = bytes.substr(16 + len);
  edit(header);
  const std::uint64_t new_len = header.size();
  std::string out = bytes.substr(0, 8);
  out.append(reinterpret_cast<const char*>(&new_len), 8);
  out += header + payload;
  testutil::write_bytes(path, out);
}

Outcome persistence() {
  testutil::TempDir dir;
  Rng rng(9);
  auto c = desk_config();
  c.head_activation = HeadActivation::kIdentity;
  TransNetModel<float> model(c, rng);
  const auto ds = gen_action_dataset(1, 2, c.frames, 32, 32);
  train_classifier(model, ds, ds, {1, 6, {}}, rng);
  const auto path = dir.path() / "model.tnet";
  save_checkpoint(model, path, Json{{"note", "acceptance"}});

  Json meta;
  auto loaded = load_transnet(path, &meta);
  bool exact = loaded.config() == model.config() && meta["note"] == "acceptance";
  const auto a = model.params();
  const auto b = loaded.params();
  exact = exact && a.size() == b.size();
  for (std::size_t i = 0; exact && i < a.size(); ++i) {
    exact = a[i]->value.shape() == b[i]->value.shape() &&
            std::memcmp(a[i]->value.raw(), b[i]->value.raw(), a[i]->value.size() * sizeof(float)) == 0;
  }
  save_checkpoint(loaded, dir.path() / "again.tnet", meta);
  exact = exact && testutil::read_bytes(path) == testutil::read_bytes(dir.path() / "again.tnet");

  const std::string original = testutil::read_bytes(path);
  struct Corruption {
    const char* name;
    CheckpointErrorKind expect;
    std::function<void()> apply;
  };
  const std::vector<Corruption> corruptions = {
      {"magic", CheckpointErrorKind::kBadMagic, [&] {
         auto s = original;
         s[0] = 'X';
         testutil::write_bytes(path, s);
       }},
      {"version", CheckpointErrorKind::kVersionMismatch, [&] {
         auto s = original;
         s[4] = 9;
         testutil::write_bytes(path, s);
       }},
      {"payload truncated", CheckpointErrorKind::kTruncated,
       [&] { testutil::write_bytes(path, original.substr(0, original.size() - 1)); }},
      {"header truncated", CheckpointErrorKind::kTruncated,
       [&] { testutil::write_bytes(path, original.substr(0, 40)); }},
      {"shape edited", CheckpointErrorKind::kShapeMismatch, [&] {
         testutil::write_bytes(path, original);
         rewrite_header(path, [](std::string& h) {
           const auto pos = h.find("\"shape\":[8,3,3,3]");
           if (pos != std::string::npos) h.replace(pos, 17, "\"shape\":[3,8,3,3]");
         });
       }},
      {"header malformed", CheckpointErrorKind::kMalformed, [&] {
         testutil::write_bytes(path, original);
         rewrite_header(path, [](std::string& h) { h[h.size() / 2] = '{'; });
       }},
  };
  std::set<std::string> tags;
  std::string wrong;
  for (const auto& k : corruptions) {
    k.apply();
    try {
      load_transnet(path);
      wrong += fmt("; %s loaded", k.name);
    } catch (const CheckpointError& e) {
      tags.insert(e.kind());
      if (e.checkpoint_kind() != k.expect) wrong += fmt("; %s gave %s", k.name, e.kind());
    }
  }
  return {exact && wrong.empty() && tags.size() == 5,
          fmt("roundtrip %s; %zu corruptions, %zu distinct error kinds%s", exact ? "bit-exact" : "NOT exact",
              corruptions.size(), tags.size(), wrong.c_str())};
}

Outcome determinism() {
  testutil::TempDir dir;
  cli::ExperimentSpec spec;
  spec.model.head_activation = HeadActivation::kIdentity;
  spec.data.generate = {3, 10};
  spec.epochs = 3;
  spec.segmentation.pairs = 24;
  spec.segmentation.epochs = 2;
  const auto data = cli::prepare_data(spec);
  const int saved = thread_count();
  auto run = [&](int threads, const char* name) {
    set_thread_count(threads);
    const auto r = cli::run_arm(spec, data, Arm::kSegmentation, 5, dir.path() / name);
    return r.log.to_csv(false);
  };
  const auto log_a = run(1, "a");
  const auto log_b = run(1, "b");
  const auto log_c = run(4, "c");
  set_thread_count(saved);
  auto same_file = [&](const char* x, const char* y, const char* f) {
    return testutil::read_bytes(dir.path() / x / f) == testutil::read_bytes(dir.path() / y / f);
  };
  const bool single = log_a == log_b && same_file("a", "b", "final.tnet") && same_file("a", "b", "pretrain.tnet");
  const bool multi = log_a == log_c && same_file("a", "c", "final.tnet") && same_file("a", "c", "pretrain.tnet");
  return {single && multi, fmt("1-thread runs %s; 4-thread run %s (logs, pretrain and final checkpoints)",
                               single ? "byte-identical" : "DIFFER", multi ? "bit-exact" : "DIFFERS")};
}

std::size_t enumerated(const std::vector<nn::Param<float>*>& params, std::string_view prefix = {}) {
  std::size_t n = 0;
  for (const auto* p : params) {
    if (p->name.starts_with(prefix)) n += p->numel();
  }
  return n;
}

Outcome parameter_accounting() {
  std::vector<TransNetConfig> configs;
  configs.push_back(desk_config());
  configs.push_back(gradcheck_toy_config());
  {
    auto c = desk_config();
    c.frames = 2;
    c.kernels = 5;
    c.classes = 11;
    c.backbone.blocks = {};
    configs.push_back(c);
  }
  {
    auto c = desk_config();
    c.frames = 12;
    c.backbone.use_batchnorm = true;
    c.backbone.blocks = {{12, 2}, {24, 1}, {48, 2}, {96, 1}};
    configs.push_back(c);
  }
  {
    TransNetConfig c;
    c.frames = 8;
    c.kernels = 64;
    c.classes = 101;
    c.backbone = mobilenet_v1_config();
    configs.push_back(c);
  }
  Rng rng(11);
  std::string detail;
  bool ok = true;
  std::size_t first_temporal = 0;
  for (const auto& c : configs) {
    TransNetModel<float> model(c, rng);
    const auto e = enumerated(model.params());
    const auto cf = closed_form_param_count(c);
    ok = ok && e == cf;
    detail += fmt("%s%zu", detail.empty() ? "" : "/", e);
    if (c.kernels == 64 && c.backbone.latent_dim() == 1024) first_temporal = enumerated(model.params(), "temporal1.");
  }
  ok = ok && first_temporal == 131136 && first_temporal == 64 * (2 * 1024 + 1);
  return {ok, fmt("5 configs enumerated == closed form (%s); K=64,s=2,L=1024 first temporal layer %zu "
                  "(expect 131136)",
                  detail.c_str(), first_temporal)};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {1, "gradient integrity", gradient_integrity},
    {2, "convolution oracles", convolution_oracles},
    {3, "shape contract", shape_contract},
    {4, "weight sharing", weight_sharing},
    {5, "overfit sanity", overfit},
    {6, "generalization sanity", generalization},
    {7, "transfer ordering", transfer_ordering},
    {8, "autoencoder quality", autoencoder_quality},
    {9, "persistence", persistence},
    {10, "determinism", determinism},
    {11, "parameter accounting", parameter_accounting},
};

}  // namespace

int main(int argc, char** argv) {
  g_experiments = TRANSNET_EXPERIMENTS_DIR;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--experiments" && i + 1 < argc) {
      g_experiments = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      only.insert(std::stoi(argv[++i]));
    } else {
      std::cerr << "usage: transnet_acceptance [--experiments DIR] [--only N]...\n";
      return 2;
    }
  }
  int failed = 0;
  for (const auto& c : kCriteria) {
    if (!only.empty() && !only.contains(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " " << c.name << ": " << o.detail
              << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : fmt("%d criteria failed", failed)) << std::endl;
  return failed == 0 ? 0 : 1;
}
