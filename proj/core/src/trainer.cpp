#include "transnet/trainer.hpp"

#include <cstdio>
#include <fstream>

#include "transnet/batching.hpp"

namespace transnet {

std::string TrainLog::to_csv(bool include_seconds) const {
  std::string out = "epoch,train_loss,train_acc,test_acc,seconds\n";
  char line[160];
  for (const auto& e : epochs) {
    std::snprintf(line, sizeof(line), "%zu,%.9g,%.9g,%.9g,%.3f\n", e.epoch, e.train_loss,
                  e.train_acc, e.test_acc, include_seconds ? e.seconds : 0.0);
    out += line;
  }
  return out;
}

void TrainLog::write_csv(const std::filesystem::path& path, bool include_seconds) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << to_csv(include_seconds);
}

void check_compatible(const TransNetConfig& config, const ClipDataset& ds) {
  const auto& g = ds.geometry;
  const auto& b = config.backbone;
  if (g.frames != config.frames || g.channels != b.input_channels || g.height != b.input_height ||
      g.width != b.input_width) {
    throw ShapeError("dataset clips are " + std::to_string(g.frames) + "x" +
                     std::to_string(g.channels) + "x" + std::to_string(g.height) + "x" +
                     std::to_string(g.width) + " but the model expects " +
                     std::to_string(config.frames) + "x" + std::to_string(b.input_channels) + "x" +
                     std::to_string(b.input_height) + "x" + std::to_string(b.input_width));
  }
  if (ds.class_names.size() != config.classes) {
    throw ConfigError("dataset has " + std::to_string(ds.class_names.size()) +
                      " classes but the model has " + std::to_string(config.classes));
  }
}

namespace {

Tensor clip_batch(const ClipDataset& ds, const std::vector<std::size_t>& idx) {
  return stack_batch(idx, [&](std::size_t i) -> const Tensor& { return ds.items[i].frames; });
}

std::vector<std::vector<std::size_t>> in_order(std::size_t count, std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < count; start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(count, start + batch_size); ++i) idx.push_back(i);
    out.push_back(std::move(idx));
  }
  return out;
}

}  // namespace

std::vector<std::size_t> predict_labels(const TransNetModel<float>& model, const ClipDataset& ds,
                                        std::size_t batch_size) {
  check_compatible(model.config(), ds);
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  const std::size_t c = model.config().classes;
  std::vector<std::size_t> out;
  out.reserve(ds.items.size());
  for (const auto& idx : in_order(ds.items.size(), batch_size)) {
    const auto probs = model.predict(clip_batch(ds, idx));
    for (std::size_t b = 0; b < idx.size(); ++b) {
      out.push_back(argmax(std::span<const float>(probs.raw() + b * c, c)));
    }
  }
  return out;
}

EvalResult evaluate(const TransNetModel<float>& model, const ClipDataset& ds,
                    std::size_t batch_size) {
  if (ds.items.empty()) throw DataError("evaluate: empty dataset");
  const auto predicted = predict_labels(model, ds, batch_size);
  const std::size_t c = model.config().classes;
  EvalResult r;
  r.total = ds.items.size();
  r.confusion.assign(c, std::vector<std::size_t>(c, 0));
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    const std::size_t truth = ds.items[i].label;
    if (truth >= c) throw IndexError("evaluate: label out of range for clip " + ds.items[i].id);
    ++r.confusion[truth][predicted[i]];
    r.correct += truth == predicted[i];
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total);
  return r;
}

TrainLog train_classifier(TransNetModel<float>& model, const ClipDataset& train,
                          const ClipDataset& test, const TrainOptions& options, Rng& rng,
                          const EpochCallback& on_epoch) {
  if (train.items.empty()) throw DataError("train_classifier: empty training set");
  if (test.items.empty()) throw DataError("train_classifier: empty test set");
  if (options.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  check_compatible(model.config(), train);
  check_compatible(model.config(), test);
  validate(train);
  validate(test);

  Optimizer<float> opt(options.optimizer);
  const auto params = model.params();
  const std::size_t c = model.config().classes;
  TrainLog log;
  TransNetTrace<float> trace;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    Stopwatch clock;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& idx : shuffled_batches(rng, train.items.size(), options.batch_size)) {
      std::vector<std::size_t> labels;
      for (auto i : idx) labels.push_back(train.items[i].label);
      const auto probs = model.forward_train(clip_batch(train, idx), trace);
      const float scale = 1.0f / static_cast<float>(idx.size());
      const float loss = model.backward(trace, labels, scale);
      opt.step(params);
      loss_sum += static_cast<double>(loss) * static_cast<double>(idx.size());
      for (std::size_t b = 0; b < idx.size(); ++b) {
        correct += argmax(std::span<const float>(probs.raw() + b * c, c)) == labels[b];
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.items.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(train.items.size());
    rec.test_acc = evaluate(model, test).accuracy;
    rec.seconds = clock.seconds();
    log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return log;
}

}  // namespace transnet
