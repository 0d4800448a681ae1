#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "transnet/autoencoder.hpp"
#include "transnet/config_json.hpp"
#include "transnet/frame_classifier.hpp"
#include "transnet/trainer.hpp"

namespace transnet::cli {

/// Backbone initialization before action training.
enum class Arm { kNone, kClassification, kSegmentation };

std::string_view to_string(Arm arm) noexcept;
Arm parse_arm(std::string_view s);

struct GenerateSpec {
  std::uint64_t seed = 1;
  std::size_t clips_per_class = 50;
};

/// Clips come from `path` when set, otherwise from the generator using the
/// model's frame count and input size.
struct DataSpec {
  std::optional<std::filesystem::path> path;
  GenerateSpec generate;
};

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 1;
};

struct SegPretrainSpec {
  std::size_t pairs = 200;
  std::size_t epochs = 30;
  std::size_t batch_size = 24;
  OptimizerConfig optimizer{OptimizerKind::kAdam, 3e-3};
  /// Use an existing autoencoder checkpoint instead of training one.
  std::optional<std::filesystem::path> checkpoint;
};

struct ClsPretrainSpec {
  std::size_t per_class = 40;
  std::size_t epochs = 30;
  std::size_t batch_size = 24;
  OptimizerConfig optimizer{OptimizerKind::kAdam, 3e-3};
  /// Use an existing frame-classifier checkpoint instead of training one.
  std::optional<std::filesystem::path> checkpoint;
};

struct ExperimentSpec {
  TransNetConfig model;
  DataSpec data;
  SplitSpec split;
  std::vector<Arm> arms{Arm::kNone};
  std::vector<std::uint64_t> seeds{1};
  OptimizerConfig optimizer;
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  bool freeze_encoder = false;
  SegPretrainSpec segmentation;
  ClsPretrainSpec classification;
  std::filesystem::path out = "runs/experiment";
  Json notes;  // free-form provenance, echoed untouched
};

/// Partial objects keep defaults; unknown keys and bad values are ConfigError.
ExperimentSpec spec_from_json(const Json& j);
Json to_json(const ExperimentSpec& spec);
/// Reads and parses a spec file. Relative paths inside it are taken
/// relative to the working directory, like command-line paths.
ExperimentSpec load_spec(const std::filesystem::path& path);
/// Non-empty arms and seeds, referenced paths exist, model config valid.
void validate(const ExperimentSpec& spec);

Json to_json(const DataSpec& data);
Json to_json(const SplitSpec& split);

struct PreparedData {
  ClipDataset train;
  ClipDataset test;
};

/// Loads or generates the clips, checks them against the model, and splits.
PreparedData prepare_data(const ExperimentSpec& spec);
/// The full dataset described by `data` for a model of the given geometry.
ClipDataset load_or_generate(const DataSpec& data, const TransNetConfig& model);

/// Checkpoint metadata that lets `eval --split auto` rebuild the test split.
Json run_metadata(const ExperimentSpec& spec, const std::vector<std::string>& class_names, Arm arm,
                  std::uint64_t seed);

struct SegPretrainResult {
  Autoencoder<float> model;
  SegTrainLog log;
};

/// Builds an autoencoder from `rng` and trains it on `pairs`; held-out IoU
/// is logged per epoch when `heldout` is given.
SegPretrainResult pretrain_segmentation(const BackboneConfig& backbone, const SegPretrainSpec& spec,
                                        const SegDataset& pairs, const SegDataset* heldout,
                                        Rng& rng);

/// `epoch,train_loss,train_iou,heldout_iou,seconds`; heldout_iou is empty
/// when no held-out set was used.
std::string seg_log_csv(const SegTrainLog& log, bool include_seconds = true);

struct ClsPretrainResult {
  FrameClassifier<float> model;
  TrainLog log;
};

ClsPretrainResult pretrain_classification(const BackboneConfig& backbone,
                                          const ClsPretrainSpec& spec, const ImageDataset& images,
                                          Rng& rng);

struct RunResult {
  Arm arm = Arm::kNone;
  std::uint64_t seed = 0;
  TrainLog log;
  EvalResult final_eval;
  Json pretrain;  // null for the none arm
  double seconds = 0.0;
};

/// One (arm, seed) run. The seed feeds one Rng whose successive splits
/// initialize the model, drive pretraining, and shuffle training batches.
/// When out_dir is non-empty it receives final.tnet, train_log.csv and
/// metrics.json (plus the pretrained checkpoint, if any).
RunResult run_arm(const ExperimentSpec& spec, const PreparedData& data, Arm arm,
                  std::uint64_t seed, const std::filesystem::path& out_dir,
                  const EpochCallback& on_epoch = {});

Json metrics_json(const RunResult& r, const std::vector<std::string>& class_names);

struct ArmSummary {
  Arm arm = Arm::kNone;
  std::size_t runs = 0;
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single run
};

/// Per-arm final test accuracy statistics, in first-appearance order.
std::vector<ArmSummary> summarize(const std::vector<RunResult>& runs);

/// Sample mean and standard deviation (n-1 denominator).
std::pair<double, double> mean_and_stddev(const std::vector<double>& values);

}  // namespace transnet::cli
