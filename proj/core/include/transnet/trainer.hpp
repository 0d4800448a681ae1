#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "transnet/data.hpp"
#include "transnet/optimizer.hpp"
#include "transnet/transnet.hpp"

namespace transnet {

struct TrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  OptimizerConfig optimizer;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;  // running accuracy of the training-mode forward passes
  double test_acc = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;

  /// `epoch,train_loss,train_acc,test_acc,seconds` plus one row per epoch.
  /// With include_seconds=false the last column is written as 0 so logs of
  /// identical runs compare byte for byte.
  std::string to_csv(bool include_seconds = true) const;
  void write_csv(const std::filesystem::path& path, bool include_seconds = true) const;
};

struct EvalResult {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  /// confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
};

/// Eval-mode accuracy and confusion matrix. DataError on an empty dataset.
EvalResult evaluate(const TransNetModel<float>& model, const ClipDataset& ds,
                    std::size_t batch_size = 32);

/// Predicted class per item in dataset order.
std::vector<std::size_t> predict_labels(const TransNetModel<float>& model, const ClipDataset& ds,
                                        std::size_t batch_size = 32);

/// Called after every epoch with the record just appended.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch training with the batch-mean clip cross-entropy. Batches are
/// a fresh rng shuffle every epoch; test accuracy is evaluated after each
/// epoch. Geometry or class-count mismatches throw before any update.
TrainLog train_classifier(TransNetModel<float>& model, const ClipDataset& train,
                          const ClipDataset& test, const TrainOptions& options, Rng& rng,
                          const EpochCallback& on_epoch = {});

/// Throws ShapeError/ConfigError when `ds` cannot feed `config`.
void check_compatible(const TransNetConfig& config, const ClipDataset& ds);

}  // namespace transnet
