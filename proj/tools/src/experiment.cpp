#include "transnet/cli/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "transnet/batching.hpp"
#include "transnet/checkpoint.hpp"

namespace transnet::cli {

namespace fs = std::filesystem;

std::string_view to_string(Arm arm) noexcept {
  switch (arm) {
    case Arm::kNone:
      return "none";
    case Arm::kClassification:
      return "classification";
    case Arm::kSegmentation:
      return "segmentation";
  }
  return "none";
}

Arm parse_arm(std::string_view s) {
  if (s == "none") return Arm::kNone;
  if (s == "classification") return Arm::kClassification;
  if (s == "segmentation") return Arm::kSegmentation;
  throw ConfigError("unknown arm '" + std::string(s) + "' (none|classification|segmentation)");
}

namespace {

std::optional<fs::path> read_path(const Json& j, const char* key, const char* where) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  std::string s;
  read_json(j, key, s, where);
  if (s.empty()) throw ConfigError(std::string(where) + "." + key + ": empty path");
  return fs::path(s);
}

SegPretrainSpec seg_spec_from_json(const Json& j) {
  constexpr const char* where = "pretrain.segmentation";
  require_known_keys(j, {"pairs", "epochs", "batch_size", "optimizer", "checkpoint"}, where);
  SegPretrainSpec s;
  read_json(j, "pairs", s.pairs, where);
  read_json(j, "epochs", s.epochs, where);
  read_json(j, "batch_size", s.batch_size, where);
  if (j.contains("optimizer")) s.optimizer = optimizer_config_from_json(j.at("optimizer"));
  s.checkpoint = read_path(j, "checkpoint", where);
  return s;
}

ClsPretrainSpec cls_spec_from_json(const Json& j) {
  constexpr const char* where = "pretrain.classification";
  require_known_keys(j, {"per_class", "epochs", "batch_size", "optimizer", "checkpoint"}, where);
  ClsPretrainSpec s;
  read_json(j, "per_class", s.per_class, where);
  read_json(j, "epochs", s.epochs, where);
  read_json(j, "batch_size", s.batch_size, where);
  if (j.contains("optimizer")) s.optimizer = optimizer_config_from_json(j.at("optimizer"));
  s.checkpoint = read_path(j, "checkpoint", where);
  return s;
}

Json optional_path(const std::optional<fs::path>& p) {
  return p ? Json(p->generic_string()) : Json(nullptr);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << text;
  if (!out) throw DataError(path.string() + ": write failed");
}

}  // namespace

Json to_json(const DataSpec& data) {
  if (data.path) return {{"path", data.path->generic_string()}};
  return {{"generate",
           {{"seed", data.generate.seed}, {"clips_per_class", data.generate.clips_per_class}}}};
}

Json to_json(const SplitSpec& split) {
  return {{"train_fraction", split.train_fraction}, {"seed", split.seed}};
}

ExperimentSpec spec_from_json(const Json& j) {
  constexpr const char* where = "spec";
  require_known_keys(j,
                     {"model", "data", "split", "arms", "seeds", "optimizer", "epochs",
                      "batch_size", "freeze_encoder", "pretrain", "out", "notes"},
                     where);
  ExperimentSpec s;
  if (j.contains("model")) s.model = transnet_config_from_json(j.at("model"));
  if (j.contains("data")) {
    const auto& d = j.at("data");
    require_known_keys(d, {"path", "generate"}, "data");
    if (d.contains("path") && d.contains("generate")) {
      throw ConfigError("data: give either path or generate, not both");
    }
    s.data.path = read_path(d, "path", "data");
    if (d.contains("generate")) {
      const auto& g = d.at("generate");
      require_known_keys(g, {"seed", "clips_per_class"}, "data.generate");
      read_json(g, "seed", s.data.generate.seed, "data.generate");
      read_json(g, "clips_per_class", s.data.generate.clips_per_class, "data.generate");
    }
  }
  if (j.contains("split")) {
    const auto& sp = j.at("split");
    require_known_keys(sp, {"train_fraction", "seed"}, "split");
    read_json(sp, "train_fraction", s.split.train_fraction, "split");
    read_json(sp, "seed", s.split.seed, "split");
  }
  if (j.contains("arms")) {
    std::vector<std::string> arms;
    read_json(j, "arms", arms, where);
    s.arms.clear();
    for (const auto& a : arms) s.arms.push_back(parse_arm(a));
  }
  read_json(j, "seeds", s.seeds, where);
  if (j.contains("optimizer")) s.optimizer = optimizer_config_from_json(j.at("optimizer"));
  read_json(j, "epochs", s.epochs, where);
  read_json(j, "batch_size", s.batch_size, where);
  read_json(j, "freeze_encoder", s.freeze_encoder, where);
  if (j.contains("pretrain")) {
    const auto& p = j.at("pretrain");
    require_known_keys(p, {"segmentation", "classification"}, "pretrain");
    if (p.contains("segmentation")) s.segmentation = seg_spec_from_json(p.at("segmentation"));
    if (p.contains("classification")) s.classification = cls_spec_from_json(p.at("classification"));
  }
  if (auto out = read_path(j, "out", where)) s.out = *out;
  if (j.contains("notes")) s.notes = j.at("notes");
  return s;
}

Json to_json(const ExperimentSpec& s) {
  Json arms = Json::array();
  for (auto a : s.arms) arms.push_back(std::string(to_string(a)));
  Json j = {
      {"model", to_json(s.model)},
      {"data", to_json(s.data)},
      {"split", to_json(s.split)},
      {"arms", std::move(arms)},
      {"seeds", s.seeds},
      {"optimizer", to_json(s.optimizer)},
      {"epochs", s.epochs},
      {"batch_size", s.batch_size},
      {"freeze_encoder", s.freeze_encoder},
      {"pretrain",
       {{"segmentation",
         {{"pairs", s.segmentation.pairs},
          {"epochs", s.segmentation.epochs},
          {"batch_size", s.segmentation.batch_size},
          {"optimizer", to_json(s.segmentation.optimizer)},
          {"checkpoint", optional_path(s.segmentation.checkpoint)}}},
        {"classification",
         {{"per_class", s.classification.per_class},
          {"epochs", s.classification.epochs},
          {"batch_size", s.classification.batch_size},
          {"optimizer", to_json(s.classification.optimizer)},
          {"checkpoint", optional_path(s.classification.checkpoint)}}}}},
      {"out", s.out.generic_string()},
  };
  if (!s.notes.is_null()) j["notes"] = s.notes;
  return j;
}

ExperimentSpec load_spec(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path.string() + ": cannot open experiment spec");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return spec_from_json(j);
}

void validate(const ExperimentSpec& s) {
  validate(s.model);
  if (s.arms.empty()) throw ConfigError("spec: arms must not be empty");
  if (s.seeds.empty()) throw ConfigError("spec: seeds must not be empty");
  if (s.batch_size == 0) throw ConfigError("spec: batch_size must be >= 1");
  if (!(s.split.train_fraction > 0.0 && s.split.train_fraction < 1.0)) {
    throw ConfigError("split.train_fraction must be in (0,1)");
  }
  if (s.data.path && !fs::exists(*s.data.path / "manifest.json")) {
    throw ConfigError("data.path: no dataset manifest under " + s.data.path->string());
  }
  if (!s.data.path && s.data.generate.clips_per_class < 2) {
    throw ConfigError("data.generate.clips_per_class must be >= 2 to split");
  }
  for (const auto* p : {&s.segmentation.checkpoint, &s.classification.checkpoint}) {
    if (*p && !fs::exists(**p)) throw ConfigError("pretrain checkpoint not found: " + (*p)->string());
  }
  if (s.segmentation.batch_size == 0 || s.classification.batch_size == 0) {
    throw ConfigError("pretrain batch_size must be >= 1");
  }
}

ClipDataset load_or_generate(const DataSpec& data, const TransNetConfig& model) {
  if (data.path) return load_clip_dataset(*data.path);
  return gen_action_dataset(data.generate.seed, data.generate.clips_per_class, model.frames,
                            model.backbone.input_height, model.backbone.input_width);
}

PreparedData prepare_data(const ExperimentSpec& spec) {
  auto ds = load_or_generate(spec.data, spec.model);
  check_compatible(spec.model, ds);
  auto [train, test] = split_dataset(ds, spec.split.train_fraction, spec.split.seed);
  return {std::move(train), std::move(test)};
}

Json run_metadata(const ExperimentSpec& spec, const std::vector<std::string>& class_names, Arm arm,
                  std::uint64_t seed) {
  return {{"class_names", class_names},
          {"arm", std::string(to_string(arm))},
          {"seed", seed},
          {"data", to_json(spec.data)},
          {"split", to_json(spec.split)}};
}

std::string seg_log_csv(const SegTrainLog& log, bool include_seconds) {
  std::string out = "epoch,train_loss,train_iou,heldout_iou,seconds\n";
  char line[192];
  for (const auto& e : log.epochs) {
    char held[32] = "";
    if (e.heldout_iou >= 0.0) std::snprintf(held, sizeof(held), "%.9g", e.heldout_iou);
    std::snprintf(line, sizeof(line), "%zu,%.9g,%.9g,%s,%.3f\n", e.epoch, e.train_loss, e.train_iou,
                  held, include_seconds ? e.seconds : 0.0);
    out += line;
  }
  return out;
}

SegPretrainResult pretrain_segmentation(const BackboneConfig& backbone, const SegPretrainSpec& spec,
                                        const SegDataset& pairs, const SegDataset* heldout,
                                        Rng& rng) {
  SegPretrainResult r{Autoencoder<float>(backbone, rng), {}};
  SegTrainOptions options;
  options.epochs = spec.epochs;
  options.batch_size = spec.batch_size;
  options.optimizer = spec.optimizer;
  r.log = train_segmentation(r.model, pairs, heldout, options, rng);
  return r;
}

ClsPretrainResult pretrain_classification(const BackboneConfig& backbone,
                                          const ClsPretrainSpec& spec, const ImageDataset& images,
                                          Rng& rng) {
  ClsPretrainResult r{FrameClassifier<float>(backbone, images.class_names.size(), rng), {}};
  TrainOptions options;
  options.epochs = spec.epochs;
  options.batch_size = spec.batch_size;
  options.optimizer = spec.optimizer;
  r.log = train_frame_classifier(r.model, images, nullptr, options, rng);
  return r;
}

namespace {

// Runs the pretraining stage of `arm` and copies the encoder into `model`.
Json pretrain_into(const ExperimentSpec& spec, Arm arm, std::uint64_t seed, Rng& rng,
                   TransNetModel<float>& model, const fs::path& out_dir) {
  const auto& bb = spec.model.backbone;
  Json info;
  if (arm == Arm::kSegmentation) {
    const auto& ss = spec.segmentation;
    if (ss.checkpoint) {
      auto ae = load_autoencoder(*ss.checkpoint);
      info = {{"source", ss.checkpoint->generic_string()}};
      info["tensors_copied"] = transfer_encoder(ae, model);
      return info;
    }
    const auto pairs = gen_segmentation_dataset(seed, ss.pairs, bb.input_height, bb.input_width);
    auto r = pretrain_segmentation(bb, ss, pairs, nullptr, rng);
    info = {{"source", "trained"},
            {"pairs", ss.pairs},
            {"epochs", ss.epochs},
            {"final_train_loss", r.log.epochs.empty() ? 0.0 : r.log.epochs.back().train_loss},
            {"final_train_iou", r.log.epochs.empty() ? 0.0 : r.log.epochs.back().train_iou}};
    info["tensors_copied"] = transfer_encoder(r.model, model);
    if (!out_dir.empty()) {
      save_checkpoint(r.model, out_dir / "pretrain.tnet", Json{{"pretrain_seed", seed}});
      write_text(out_dir / "pretrain_log.csv", seg_log_csv(r.log));
    }
    return info;
  }
  const auto& cs = spec.classification;
  if (cs.checkpoint) {
    auto fc = load_frame_classifier(*cs.checkpoint);
    info = {{"source", cs.checkpoint->generic_string()}};
    info["tensors_copied"] = transfer_backbone(fc.backbone(), model.backbone());
    return info;
  }
  const auto images =
      gen_shape_classification_dataset(seed, cs.per_class, bb.input_height, bb.input_width);
  auto r = pretrain_classification(bb, cs, images, rng);
  info = {{"source", "trained"},
          {"images", images.items.size()},
          {"epochs", cs.epochs},
          {"final_train_loss", r.log.epochs.empty() ? 0.0 : r.log.epochs.back().train_loss},
          {"final_train_acc", r.log.epochs.empty() ? 0.0 : r.log.epochs.back().train_acc}};
  info["tensors_copied"] = transfer_backbone(r.model.backbone(), model.backbone());
  if (!out_dir.empty()) {
    save_checkpoint(r.model, out_dir / "pretrain.tnet", Json{{"pretrain_seed", seed}});
    write_text(out_dir / "pretrain_log.csv", r.log.to_csv());
  }
  return info;
}

}  // namespace

RunResult run_arm(const ExperimentSpec& spec, const PreparedData& data, Arm arm,
                  std::uint64_t seed, const fs::path& out_dir, const EpochCallback& on_epoch) {
  Stopwatch clock;
  if (!out_dir.empty()) fs::create_directories(out_dir);
  Rng root(seed);
  Rng model_rng = root.split();
  Rng pretrain_rng = root.split();
  Rng train_rng = root.split();

  TransNetModel<float> model(spec.model, model_rng);
  RunResult r;
  r.arm = arm;
  r.seed = seed;
  if (arm != Arm::kNone) {
    r.pretrain = pretrain_into(spec, arm, seed, pretrain_rng, model, out_dir);
    if (spec.freeze_encoder) model.set_backbone_frozen(true);
  }

  TrainOptions options;
  options.epochs = spec.epochs;
  options.batch_size = spec.batch_size;
  options.optimizer = spec.optimizer;
  r.log = train_classifier(model, data.train, data.test, options, train_rng, on_epoch);
  r.final_eval = evaluate(model, data.test);
  r.seconds = clock.seconds();

  if (!out_dir.empty()) {
    const auto& names = data.train.class_names;
    save_checkpoint(model, out_dir / "final.tnet", run_metadata(spec, names, arm, seed));
    r.log.write_csv(out_dir / "train_log.csv");
    write_text(out_dir / "metrics.json", metrics_json(r, names).dump(2) + "\n");
  }
  return r;
}

Json metrics_json(const RunResult& r, const std::vector<std::string>& class_names) {
  Json final_epoch = nullptr;
  if (!r.log.epochs.empty()) {
    const auto& e = r.log.epochs.back();
    final_epoch = {{"epoch", e.epoch},
                   {"train_loss", e.train_loss},
                   {"train_acc", e.train_acc},
                   {"test_acc", e.test_acc}};
  }
  return {{"arm", std::string(to_string(r.arm))},
          {"seed", r.seed},
          {"class_names", class_names},
          {"final_epoch", final_epoch},
          {"test",
           {{"accuracy", r.final_eval.accuracy},
            {"correct", r.final_eval.correct},
            {"total", r.final_eval.total},
            {"confusion", r.final_eval.confusion}}},
          {"pretrain", r.pretrain},
          {"seconds", r.seconds}};
}

std::pair<double, double> mean_and_stddev(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

std::vector<ArmSummary> summarize(const std::vector<RunResult>& runs) {
  std::vector<ArmSummary> out;
  std::vector<std::vector<double>> values;
  for (const auto& r : runs) {
    std::size_t i = 0;
    while (i < out.size() && out[i].arm != r.arm) ++i;
    if (i == out.size()) {
      out.push_back({r.arm});
      values.emplace_back();
    }
    values[i].push_back(r.final_eval.accuracy);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].runs = values[i].size();
    std::tie(out[i].mean, out[i].stddev) = mean_and_stddev(values[i]);
  }
  return out;
}

}  // namespace transnet::cli
