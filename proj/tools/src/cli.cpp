#include "transnet/cli/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "transnet/batching.hpp"
#include "transnet/checkpoint.hpp"
#include "transnet/cli/experiment.hpp"
#include "transnet/gradcheck.hpp"
#include "transnet/parallel.hpp"

namespace transnet::cli {

namespace fs = std::filesystem;

namespace {

std::string format(const char* fmt, auto... args) {
  const int n = std::snprintf(nullptr, 0, fmt, args...);
  std::string s(static_cast<std::size_t>(n) + 1, '\0');
  std::snprintf(s.data(), s.size(), fmt, args...);
  s.resize(static_cast<std::size_t>(n));
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw DataError(path.string() + ": write failed");
}

Json read_json_file(const fs::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open " + what);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// --preset / --backbone selection shared by the pretraining commands.
struct BackboneChoice {
  std::string preset = "toy";
  std::string config_path;

  void add_to(CLI::App* app) {
    app->add_option("--preset", preset, "Backbone preset")
        ->check(CLI::IsMember({"toy", "mobilenet_v1"}))
        ->capture_default_str();
    app->add_option("--backbone", config_path, "Backbone config JSON file (overrides --preset)");
  }

  BackboneConfig resolve() const {
    if (!config_path.empty()) return backbone_config_from_json(read_json_file(config_path, "backbone config"));
    return preset == "toy" ? toy_backbone_config() : mobilenet_v1_config();
  }
};

std::string epoch_line(const EpochRecord& e) {
  return format("epoch %zu loss %.4f train_acc %.4f test_acc %.4f (%.2fs)\n", e.epoch, e.train_loss,
                e.train_acc, e.test_acc, e.seconds);
}

void print_confusion(std::ostream& out, const EvalResult& r, const std::vector<std::string>& names) {
  std::size_t width = 9;
  for (const auto& n : names) width = std::max(width, n.size());
  out << format("%-*s", static_cast<int>(width), "true\\pred");
  for (std::size_t c = 0; c < names.size(); ++c) out << format(" %5zu", c);
  out << "\n";
  for (std::size_t t = 0; t < r.confusion.size(); ++t) {
    out << format("%-*s", static_cast<int>(width), t < names.size() ? names[t].c_str() : "?");
    for (auto v : r.confusion[t]) out << format(" %5zu", v);
    out << "\n";
  }
}

// ---------------------------------------------------------------------------

struct GenDataOptions {
  std::string kind;
  std::uint64_t seed = 1;
  std::size_t clips_per_class = 10;
  std::size_t count = 200;
  std::size_t frames = 8;
  std::size_t height = 32;
  std::size_t width = 32;
  std::string out;
};

int run_gen_data(const GenDataOptions& o, std::ostream& out) {
  if (o.kind == "actions") {
    const auto ds = gen_action_dataset(o.seed, o.clips_per_class, o.frames, o.height, o.width);
    write_clip_dataset(ds, o.out);
    out << format("wrote %zu clips (%zu classes, %zu frames of %zux%zu) to %s\n", ds.items.size(),
                  ds.class_names.size(), o.frames, o.height, o.width, o.out.c_str());
  } else {
    const auto ds = gen_segmentation_dataset(o.seed, o.count, o.height, o.width);
    write_seg_dataset(ds, o.out);
    out << format("wrote %zu image/mask pairs (%zux%zu) to %s\n", ds.items.size(), o.height, o.width,
                  o.out.c_str());
  }
  return kExitOk;
}

struct PretrainSegOptions {
  BackboneChoice backbone;
  std::uint64_t seed = 1;
  std::string data;
  std::size_t pairs = 200;
  std::size_t heldout = 40;
  double heldout_fraction = 0.2;
  SegPretrainSpec spec;
  std::string out;
  bool quiet = false;
};

int run_pretrain_seg(const PretrainSegOptions& o, std::ostream& out) {
  const auto bb = o.backbone.resolve();
  SegDataset train;
  SegDataset heldout;
  if (!o.data.empty()) {
    auto all = load_seg_dataset(o.data);
    std::tie(train, heldout) = split_dataset(all, 1.0 - o.heldout_fraction, o.seed);
  } else {
    // pair i depends only on (seed, i), so the held-out pairs are the tail
    auto all = gen_segmentation_dataset(o.seed, o.pairs + o.heldout, bb.input_height, bb.input_width);
    train = all;
    train.items.resize(o.pairs);
    heldout = all;
    heldout.items.erase(heldout.items.begin(), heldout.items.begin() + static_cast<long>(o.pairs));
  }
  const SegDataset* held = heldout.items.empty() ? nullptr : &heldout;
  Rng rng(o.seed);
  auto r = pretrain_segmentation(bb, o.spec, train, held, rng);
  if (!o.quiet) {
    for (const auto& e : r.log.epochs) {
      out << format("epoch %zu loss %.4f train_iou %.4f heldout_iou %.4f (%.2fs)\n", e.epoch,
                    e.train_loss, e.train_iou, e.heldout_iou, e.seconds);
    }
  }
  fs::create_directories(o.out);
  const fs::path dir(o.out);
  save_checkpoint(r.model, dir / "autoencoder.tnet", Json{{"pretrain_seed", o.seed}});
  write_text(dir / "seg_log.csv", seg_log_csv(r.log));
  Json metrics = {{"train_pairs", train.items.size()},
                  {"heldout_pairs", heldout.items.size()},
                  {"epochs", o.spec.epochs},
                  {"final_train_iou", r.log.epochs.empty() ? 0.0 : r.log.epochs.back().train_iou},
                  {"heldout_iou", held ? evaluate_segmentation(r.model, heldout) : -1.0}};
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");
  out << format("heldout_iou %.4f\n", metrics["heldout_iou"].get<double>());
  return kExitOk;
}

struct PretrainClsOptions {
  BackboneChoice backbone;
  std::uint64_t seed = 1;
  ClsPretrainSpec spec;
  std::string out;
  bool quiet = false;
};

int run_pretrain_cls(const PretrainClsOptions& o, std::ostream& out) {
  const auto bb = o.backbone.resolve();
  const auto images =
      gen_shape_classification_dataset(o.seed, o.spec.per_class, bb.input_height, bb.input_width);
  Rng rng(o.seed);
  auto r = pretrain_classification(bb, o.spec, images, rng);
  if (!o.quiet) {
    for (const auto& e : r.log.epochs) {
      out << format("epoch %zu loss %.4f train_acc %.4f (%.2fs)\n", e.epoch, e.train_loss,
                    e.train_acc, e.seconds);
    }
  }
  fs::create_directories(o.out);
  const fs::path dir(o.out);
  save_checkpoint(r.model, dir / "frame_classifier.tnet",
                  Json{{"pretrain_seed", o.seed}, {"class_names", images.class_names}});
  r.log.write_csv(dir / "train_log.csv");
  const double acc = evaluate_frames(r.model, images);
  write_text(dir / "metrics.json",
             Json{{"images", images.items.size()}, {"epochs", o.spec.epochs}, {"train_acc", acc}}
                     .dump(2) +
                 "\n");
  out << format("train_acc %.4f\n", acc);
  return kExitOk;
}

// Overrides shared by train and compare-arms.
struct SpecOverrides {
  std::string spec_path;
  CLI::Option* data = nullptr;
  CLI::Option* epochs = nullptr;
  CLI::Option* batch = nullptr;
  CLI::Option* lr = nullptr;
  CLI::Option* optimizer = nullptr;
  CLI::Option* out = nullptr;
  CLI::Option* freeze = nullptr;
  CLI::Option* seg_ckpt = nullptr;
  CLI::Option* cls_ckpt = nullptr;
  std::string data_v;
  std::size_t epochs_v = 0;
  std::size_t batch_v = 0;
  double lr_v = 0.0;
  std::string optimizer_v;
  std::string out_v;
  bool freeze_v = false;
  std::string seg_ckpt_v;
  std::string cls_ckpt_v;

  void add_to(CLI::App* app) {
    app->add_option("--spec", spec_path, "Experiment spec JSON file")->check(CLI::ExistingFile);
    data = app->add_option("--data", data_v, "Action dataset directory (replaces the spec's data)");
    epochs = app->add_option("--epochs", epochs_v, "Training epochs");
    batch = app->add_option("--batch-size", batch_v, "Training batch size")->check(CLI::PositiveNumber);
    lr = app->add_option("--lr", lr_v, "Learning rate")->check(CLI::PositiveNumber);
    optimizer = app->add_option("--optimizer", optimizer_v, "Optimizer kind")
                    ->check(CLI::IsMember({"adam", "sgd_momentum"}));
    out = app->add_option("--out", out_v, "Output directory");
    freeze = app->add_flag("--freeze-encoder", freeze_v, "Freeze transferred backbone weights");
    seg_ckpt = app->add_option("--seg-checkpoint", seg_ckpt_v, "Autoencoder checkpoint for the segmentation arm")
                   ->check(CLI::ExistingFile);
    cls_ckpt = app->add_option("--cls-checkpoint", cls_ckpt_v,
                               "Frame-classifier checkpoint for the classification arm")
                   ->check(CLI::ExistingFile);
  }

  ExperimentSpec resolve() const {
    ExperimentSpec s = spec_path.empty() ? ExperimentSpec{} : load_spec(spec_path);
    if (data->count() > 0) s.data.path = fs::path(data_v);
    if (epochs->count() > 0) s.epochs = epochs_v;
    if (batch->count() > 0) s.batch_size = batch_v;
    if (optimizer->count() > 0) s.optimizer.kind = parse_optimizer_kind(optimizer_v);
    if (lr->count() > 0) s.optimizer.learning_rate = lr_v;
    if (out->count() > 0) s.out = out_v;
    if (freeze->count() > 0) s.freeze_encoder = freeze_v;
    if (seg_ckpt->count() > 0) s.segmentation.checkpoint = fs::path(seg_ckpt_v);
    if (cls_ckpt->count() > 0) s.classification.checkpoint = fs::path(cls_ckpt_v);
    return s;
  }
};

struct TrainCmdOptions {
  SpecOverrides spec;
  CLI::Option* arm_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
  std::string arm;
  std::uint64_t seed = 0;
  bool quiet = false;
};

int run_train(const TrainCmdOptions& o, std::ostream& out) {
  auto spec = o.spec.resolve();
  if (o.arm_opt->count() > 0) spec.arms = {parse_arm(o.arm)};
  if (o.seed_opt->count() > 0) spec.seeds = {o.seed};
  validate(spec);
  const Arm arm = spec.arms.front();
  const std::uint64_t seed = spec.seeds.front();
  const auto data = prepare_data(spec);
  fs::create_directories(spec.out);
  // the effective spec describes exactly this run
  auto effective = spec;
  effective.arms = {arm};
  effective.seeds = {seed};
  write_text(spec.out / "effective_spec.json", to_json(effective).dump(2) + "\n");
  out << format("train: arm %s seed %llu, %zu train / %zu test clips\n",
                std::string(to_string(arm)).c_str(), static_cast<unsigned long long>(seed),
                data.train.items.size(), data.test.items.size());
  const auto r = run_arm(spec, data, arm, seed, spec.out, [&](const EpochRecord& e) {
    if (!o.quiet) out << epoch_line(e) << std::flush;
  });
  out << format("final test_acc %.4f (%zu/%zu)\n", r.final_eval.accuracy, r.final_eval.correct,
                r.final_eval.total);
  out << "wrote " << (spec.out / "final.tnet").generic_string() << "\n";
  return kExitOk;
}

struct CompareOptions {
  SpecOverrides spec;
  CLI::Option* arms_opt = nullptr;
  CLI::Option* seeds_opt = nullptr;
  std::vector<std::string> arms;
  std::vector<std::uint64_t> seeds;
  bool quiet = false;
};

int run_compare(const CompareOptions& o, std::ostream& out) {
  auto spec = o.spec.resolve();
  if (o.arms_opt->count() > 0) {
    spec.arms.clear();
    for (const auto& a : o.arms) spec.arms.push_back(parse_arm(a));
  }
  if (o.seeds_opt->count() > 0) spec.seeds = o.seeds;
  validate(spec);
  const auto data = prepare_data(spec);
  fs::create_directories(spec.out);
  write_text(spec.out / "effective_spec.json", to_json(spec).dump(2) + "\n");

  std::vector<RunResult> runs;
  std::string results = "arm,seed,test_acc\n";
  for (const Arm arm : spec.arms) {
    for (const std::uint64_t seed : spec.seeds) {
      const auto dir = spec.out / std::string(to_string(arm)) / ("seed_" + std::to_string(seed));
      auto r = run_arm(spec, data, arm, seed, dir);
      if (!o.quiet) {
        out << format("%-15s seed %-6llu test_acc %.4f (%.1fs)\n", std::string(to_string(arm)).c_str(),
                      static_cast<unsigned long long>(seed), r.final_eval.accuracy, r.seconds)
            << std::flush;
      }
      results += format("%s,%llu,%.9g\n", std::string(to_string(arm)).c_str(),
                        static_cast<unsigned long long>(seed), r.final_eval.accuracy);
      runs.push_back(std::move(r));
    }
  }
  write_text(spec.out / "results.csv", results);
  std::string summary = "arm,runs,mean_test_acc,std_test_acc\n";
  out << format("%-15s %5s %9s %9s\n", "arm", "runs", "mean", "std");
  for (const auto& s : summarize(runs)) {
    const auto name = std::string(to_string(s.arm));
    summary += format("%s,%zu,%.9g,%.9g\n", name.c_str(), s.runs, s.mean, s.stddev);
    out << format("%-15s %5zu %9.4f %9.4f   (%.2f +- %.2f %%)\n", name.c_str(), s.runs, s.mean,
                  s.stddev, 100.0 * s.mean, 100.0 * s.stddev);
  }
  write_text(spec.out / "summary.csv", summary);
  return kExitOk;
}

// Dataset a TransNet checkpoint should be evaluated on.
ClipDataset eval_dataset(const TransNetModel<float>& model, const Json& meta,
                         const std::string& data_path, const std::string& split) {
  DataSpec data;
  if (!data_path.empty()) {
    data.path = fs::path(data_path);
  } else if (meta.is_object() && meta.contains("data")) {
    const auto& d = meta["data"];
    if (d.contains("path")) {
      data.path = fs::path(d["path"].get<std::string>());
    } else {
      data.generate.seed = d["generate"]["seed"].get<std::uint64_t>();
      data.generate.clips_per_class = d["generate"]["clips_per_class"].get<std::size_t>();
    }
  } else {
    throw ConfigError("--data is required: the checkpoint does not record its dataset");
  }
  auto ds = load_or_generate(data, model.config());
  check_compatible(model.config(), ds);
  if (meta.is_object() && meta.contains("class_names") &&
      meta["class_names"].get<std::vector<std::string>>() != ds.class_names) {
    throw DataError("dataset classes differ from the classes the checkpoint was trained on");
  }
  if (split == "all") return ds;
  const bool has_split = meta.is_object() && meta.contains("split");
  if (split == "auto" && !has_split) return ds;
  if (!has_split) throw ConfigError("--split " + split + ": the checkpoint records no split");
  auto parts = split_dataset(ds, meta["split"]["train_fraction"].get<double>(),
                             meta["split"]["seed"].get<std::uint64_t>());
  return split == "train" ? std::move(parts.first) : std::move(parts.second);
}

struct EvalOptions {
  std::string checkpoint;
  std::string data;
  std::string split = "auto";
  bool json = false;
};

int run_eval(const EvalOptions& o, std::ostream& out) {
  Json meta;
  const auto model = load_transnet(o.checkpoint, &meta);
  const auto ds = eval_dataset(model, meta, o.data, o.split);
  const auto r = evaluate(model, ds);
  if (o.json) {
    out << Json{{"accuracy", r.accuracy},
                {"correct", r.correct},
                {"total", r.total},
                {"confusion", r.confusion},
                {"class_names", ds.class_names}}
               .dump(2)
        << "\n";
    return kExitOk;
  }
  out << format("accuracy %.6f (%zu/%zu)\n", r.accuracy, r.correct, r.total);
  print_confusion(out, r, ds.class_names);
  return kExitOk;
}

struct PredictOptions {
  std::string checkpoint;
  std::string clip;
  std::string data;
  std::string split = "all";
};

int run_predict(const PredictOptions& o, std::ostream& out) {
  Json meta;
  const auto model = load_transnet(o.checkpoint, &meta);
  std::vector<std::string> names;
  if (meta.is_object() && meta.contains("class_names")) {
    names = meta["class_names"].get<std::vector<std::string>>();
  } else {
    for (std::size_t c = 0; c < model.config().classes; ++c) names.push_back("class_" + std::to_string(c));
  }
  const std::size_t classes = model.config().classes;
  out << "id,predicted,confidence\n";
  const auto report = [&](const std::string& id, const float* probs) {
    const auto best = argmax(std::span<const float>(probs, classes));
    out << format("%s,%s,%.6f\n", id.c_str(), names.at(best).c_str(), static_cast<double>(probs[best]));
  };
  if (!o.clip.empty()) {
    const auto frames = sample_frames(load_frame_directory(o.clip), model.config().frames);
    std::vector<std::size_t> idx(frames.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const auto probs =
        model.predict(stack_batch(idx, [&](std::size_t i) -> const Tensor& { return frames[i]; }));
    report(fs::path(o.clip).filename().string(), probs.raw());
    return kExitOk;
  }
  const auto ds = eval_dataset(model, meta, o.data, o.split);
  for (std::size_t start = 0; start < ds.items.size(); start += 32) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(ds.items.size(), start + 32); ++i) idx.push_back(i);
    const auto probs = model.predict(
        stack_batch(idx, [&](std::size_t i) -> const Tensor& { return ds.items[i].frames; }));
    for (std::size_t b = 0; b < idx.size(); ++b) report(ds.items[idx[b]].id, probs.raw() + b * classes);
  }
  return kExitOk;
}

struct GradcheckOptions {
  std::string preset = "toy";
  std::size_t samples = 200;
  double epsilon = 1e-4;
  double tolerance = 1e-3;
  std::uint64_t seed = 7;
  std::string head = "relu";
};

int run_gradcheck(const GradcheckOptions& o, std::ostream& out) {
  Stopwatch clock;
  const auto r = run_toy_gradcheck(o.samples, o.epsilon, o.tolerance, o.seed,
                                   parse_head_activation(o.head));
  out << format("gradcheck %s: %zu of %zu parameters checked, max relative error %.3e (tolerance %.1e)\n",
                o.preset.c_str(), r.report.checked, r.param_count, r.report.max_rel_error, o.tolerance);
  out << format("  %zu probes had a nonzero gradient\n", r.report.nonzero);
  if (r.report.kinks_skipped > 0) {
    out << format("  %zu probes straddled a ReLU kink and were replaced\n", r.report.kinks_skipped);
  }
  for (const auto& f : r.report.failures) {
    out << format("  fail %s[%zu]: analytic %.9g numeric %.9g rel %.3e\n", f.param.c_str(), f.index,
                  f.analytic, f.numeric, f.rel_error);
  }
  out << (r.report.passed() ? "PASS" : "FAIL") << format(" (%.2fs)\n", clock.seconds());
  return r.report.passed() ? kExitOk : kExitRuntime;
}

int run_inspect(const std::string& path, std::ostream& out) {
  const auto info = read_checkpoint_info(path);
  out << info.header_text << "\n";
  std::size_t width = 4;
  for (const auto& t : info.tensors) width = std::max(width, t.name.size());
  out << format("%-*s  %-18s %10s  %s\n", static_cast<int>(width), "name", "shape", "count", "role");
  std::size_t total = 0;
  for (const auto& t : info.tensors) {
    const auto count = shape_numel(t.shape);
    if (t.role == "param") total += count;
    out << format("%-*s  %-18s %10zu  %s\n", static_cast<int>(width), t.name.c_str(),
                  transnet::to_string(t.shape).c_str(), count, t.role.c_str());
  }
  out << format("%zu tensors, %zu parameters, %llu payload bytes\n", info.tensors.size(), total,
                static_cast<unsigned long long>(info.payload_bytes));
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"TransNet: time-distributed 2D CNN + 1D temporal head, from scratch", "transnet"};
  app.require_subcommand(1, 1);
  int threads = -1;
  app.add_option("--threads", threads, "Worker threads (default: TRANSNET_THREADS, else 1)")
      ->check(CLI::NonNegativeNumber);

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic dataset to disk");
  gen_cmd->add_option("--kind", gen.kind, "Dataset kind")
      ->required()
      ->check(CLI::IsMember({"actions", "segmentation"}));
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--clips-per-class", gen.clips_per_class, "Clips per action class")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen_cmd->add_option("--count", gen.count, "Segmentation pairs")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen_cmd->add_option("--frames", gen.frames, "Frames per clip")->capture_default_str();
  gen_cmd->add_option("--height", gen.height, "Image height")->capture_default_str();
  gen_cmd->add_option("--width", gen.width, "Image width")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  PretrainSegOptions seg;
  auto* seg_cmd = app.add_subcommand("pretrain-seg", "Train a segmentation autoencoder");
  seg.backbone.add_to(seg_cmd);
  seg_cmd->add_option("--seed", seg.seed, "Seed for data, initialization and batches")
      ->capture_default_str();
  seg_cmd->add_option("--data", seg.data, "Segmentation dataset directory (default: generate)");
  seg_cmd->add_option("--pairs", seg.pairs, "Generated training pairs")->capture_default_str();
  seg_cmd->add_option("--heldout", seg.heldout, "Generated held-out pairs")->capture_default_str();
  seg_cmd->add_option("--heldout-fraction", seg.heldout_fraction, "Held-out share of --data")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  seg_cmd->add_option("--epochs", seg.spec.epochs, "Epochs")->capture_default_str();
  seg_cmd->add_option("--batch-size", seg.spec.batch_size, "Batch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  seg_cmd->add_option("--lr", seg.spec.optimizer.learning_rate, "Adam learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  seg_cmd->add_option("--out", seg.out, "Output directory")->required();
  seg_cmd->add_flag("-q,--quiet", seg.quiet, "No per-epoch lines");

  PretrainClsOptions cls;
  auto* cls_cmd = app.add_subcommand("pretrain-cls", "Pretrain a backbone on shape classification");
  cls.backbone.add_to(cls_cmd);
  cls_cmd->add_option("--seed", cls.seed, "Seed for data, initialization and batches")
      ->capture_default_str();
  cls_cmd->add_option("--per-class", cls.spec.per_class, "Images per shape class")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cls_cmd->add_option("--epochs", cls.spec.epochs, "Epochs")->capture_default_str();
  cls_cmd->add_option("--batch-size", cls.spec.batch_size, "Batch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cls_cmd->add_option("--lr", cls.spec.optimizer.learning_rate, "Adam learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cls_cmd->add_option("--out", cls.out, "Output directory")->required();
  cls_cmd->add_flag("-q,--quiet", cls.quiet, "No per-epoch lines");

  TrainCmdOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train one TransNet run from an experiment spec");
  train.spec.add_to(train_cmd);
  train.arm_opt = train_cmd->add_option("--arm", train.arm, "Arm (default: first in spec)")
                      ->check(CLI::IsMember({"none", "classification", "segmentation"}));
  train.seed_opt = train_cmd->add_option("--seed", train.seed, "Seed (default: first in spec)");
  train_cmd->add_flag("-q,--quiet", train.quiet, "No per-epoch lines");

  CompareOptions cmp;
  auto* cmp_cmd = app.add_subcommand("compare-arms", "Run every arm over every seed and summarize");
  cmp.spec.add_to(cmp_cmd);
  cmp.arms_opt = cmp_cmd->add_option("--arms", cmp.arms, "Arms to run")
                     ->check(CLI::IsMember({"none", "classification", "segmentation"}));
  cmp.seeds_opt = cmp_cmd->add_option("--seeds", cmp.seeds, "Seeds to run");
  cmp_cmd->add_flag("-q,--quiet", cmp.quiet, "No per-run lines");

  EvalOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a TransNet checkpoint");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "TransNet checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ev.data, "Action dataset directory (default: as recorded)");
  eval_cmd->add_option("--split", ev.split, "auto = recorded test split if any, else all")
      ->check(CLI::IsMember({"auto", "all", "train", "test"}))
      ->capture_default_str();
  eval_cmd->add_flag("--json", ev.json, "Print JSON instead of a table");

  PredictOptions pred;
  auto* pred_cmd = app.add_subcommand("predict", "Predict action classes");
  pred_cmd->add_option("--checkpoint", pred.checkpoint, "TransNet checkpoint")
      ->required()
      ->check(CLI::ExistingFile);
  auto* clip_opt = pred_cmd->add_option("--clip", pred.clip, "Directory of frame_*.ppm files")
                       ->check(CLI::ExistingDirectory);
  pred_cmd->add_option("--data", pred.data, "Action dataset directory")->excludes(clip_opt);
  pred_cmd->add_option("--split", pred.split, "Dataset split to predict")
      ->check(CLI::IsMember({"auto", "all", "train", "test"}))
      ->capture_default_str();

  GradcheckOptions gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the toy TransNet");
  gc_cmd->add_option("--preset", gc.preset, "Model preset")
      ->check(CLI::IsMember({"toy"}))
      ->capture_default_str();
  gc_cmd->add_option("--samples", gc.samples, "Sampled scalar parameters")->capture_default_str();
  gc_cmd->add_option("--epsilon", gc.epsilon, "Finite-difference step")->capture_default_str();
  gc_cmd->add_option("--tolerance", gc.tolerance, "Relative error tolerance")->capture_default_str();
  gc_cmd->add_option("--seed", gc.seed, "Seed")->capture_default_str();
  gc_cmd->add_option("--head", gc.head, "Head activation")
      ->check(CLI::IsMember({"relu", "identity"}))
      ->capture_default_str();

  std::string inspect_path;
  auto* inspect_cmd = app.add_subcommand("inspect-checkpoint", "Print a checkpoint header and tensors");
  inspect_cmd->add_option("checkpoint,--checkpoint", inspect_path, "Checkpoint file")
      ->required()
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    // subcommand help requests arrive here too
    if (e.get_exit_code() == 0) {
      for (auto* sub : app.get_subcommands()) out << sub->help();
      if (app.get_subcommands().empty()) out << app.help();
      return kExitOk;
    }
    err << "usage error: " << e.what() << "\n";
    err << "run 'transnet --help' for usage\n";
    return kExitUsage;
  }

  try {
    if (threads >= 0) set_thread_count(threads);
    if (gen_cmd->parsed()) return run_gen_data(gen, out);
    if (seg_cmd->parsed()) return run_pretrain_seg(seg, out);
    if (cls_cmd->parsed()) return run_pretrain_cls(cls, out);
    if (train_cmd->parsed()) return run_train(train, out);
    if (cmp_cmd->parsed()) return run_compare(cmp, out);
    if (eval_cmd->parsed()) return run_eval(ev, out);
    if (pred_cmd->parsed()) return run_predict(pred, out);
    if (gc_cmd->parsed()) return run_gradcheck(gc, out);
    if (inspect_cmd->parsed()) return run_inspect(inspect_path, out);
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return kExitRuntime;
  }
  err << "usage error: no subcommand\n";
  return kExitUsage;
}

}  // namespace transnet::cli
