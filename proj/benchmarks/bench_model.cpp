#include <benchmark/benchmark.h>

#include <vector>

#include "transnet/optimizer.hpp"
#include "transnet/transnet.hpp"

namespace {

using namespace transnet;

Tensor random_clips(Rng& rng, const TransNetConfig& c, std::size_t batch) {
  const auto& b = c.backbone;
  Tensor t({batch, c.frames, b.input_channels, b.input_height, b.input_width});
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform());
  return t;
}

void BM_Predict(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  auto c = desk_config();
  c.head_activation = HeadActivation::kIdentity;
  TransNetModel<float> model(c, rng);
  const auto clips = random_clips(rng, c, batch);
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(clips));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(batch));
}
BENCHMARK(BM_Predict)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

// One optimizer step on a batch: forward, backward, Adam update.
void BM_TrainStep(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  auto c = desk_config();
  c.head_activation = HeadActivation::kIdentity;
  TransNetModel<float> model(c, rng);
  const auto clips = random_clips(rng, c, batch);
  std::vector<std::size_t> labels(batch);
  for (auto& l : labels) l = rng.below(c.classes);
  Optimizer<float> opt;
  const auto params = model.params();
  for (auto _ : state) {
    TransNetTrace<float> trace;
    model.forward_train(clips, trace);
    benchmark::DoNotOptimize(model.backward(trace, labels, 1.0f / static_cast<float>(batch)));
    opt.step(params);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(batch));
}
BENCHMARK(BM_TrainStep)->Arg(16)->Unit(benchmark::kMillisecond);

}  // namespace
