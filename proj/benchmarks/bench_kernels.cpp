#include <benchmark/benchmark.h>

#include "transnet/nn/ops.hpp"
#include "transnet/rng.hpp"

namespace {

using transnet::Rng;
using transnet::Shape;
using transnet::Tensor;

Tensor random_tensor(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

// Args: batch, channels in, channels out, spatial size, kernel, stride.
void BM_Conv2dForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto cin = static_cast<std::size_t>(state.range(1));
  const auto cout = static_cast<std::size_t>(state.range(2));
  const auto hw = static_cast<std::size_t>(state.range(3));
  const auto k = static_cast<std::size_t>(state.range(4));
  const auto stride = static_cast<std::size_t>(state.range(5));
  Rng rng(1);
  const auto x = random_tensor(rng, {n, cin, hw, hw});
  const auto w = random_tensor(rng, {cout, cin, k, k});
  const auto b = random_tensor(rng, {cout});
  for (auto _ : state) {
    benchmark::DoNotOptimize(transnet::nn::conv2d_forward(x, w, b, {stride, k / 2}));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_Conv2dForward)
    ->Args({16, 3, 8, 32, 3, 2})    // stem
    ->Args({16, 16, 32, 16, 1, 1})  // pointwise
    ->Args({16, 32, 64, 8, 1, 1})
    ->Unit(benchmark::kMicrosecond);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto cin = static_cast<std::size_t>(state.range(1));
  const auto cout = static_cast<std::size_t>(state.range(2));
  const auto hw = static_cast<std::size_t>(state.range(3));
  const auto k = static_cast<std::size_t>(state.range(4));
  const auto stride = static_cast<std::size_t>(state.range(5));
  Rng rng(2);
  const auto x = random_tensor(rng, {n, cin, hw, hw});
  const auto w = random_tensor(rng, {cout, cin, k, k});
  const auto b = random_tensor(rng, {cout});
  const auto y = transnet::nn::conv2d_forward(x, w, b, {stride, k / 2});
  const auto up = random_tensor(rng, y.shape());
  for (auto _ : state) {
    benchmark::DoNotOptimize(transnet::nn::conv2d_backward(x, w, up, {stride, k / 2}));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_Conv2dBackward)
    ->Args({16, 3, 8, 32, 3, 2})
    ->Args({16, 16, 32, 16, 1, 1})
    ->Unit(benchmark::kMicrosecond);

// Args: batch, channels, spatial size, stride.
void BM_DepthwiseForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto c = static_cast<std::size_t>(state.range(1));
  const auto hw = static_cast<std::size_t>(state.range(2));
  const auto stride = static_cast<std::size_t>(state.range(3));
  Rng rng(3);
  const auto x = random_tensor(rng, {n, c, hw, hw});
  const auto w = random_tensor(rng, {c, 3, 3});
  const auto b = random_tensor(rng, {c});
  for (auto _ : state) {
    benchmark::DoNotOptimize(transnet::nn::depthwise_conv2d_forward(x, w, b, {stride, 1}));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_DepthwiseForward)->Args({16, 8, 16, 1})->Args({16, 32, 16, 2})->Unit(benchmark::kMicrosecond);

// Args: sequence length, latent size, kernels, span.
void BM_Conv1dForward(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const auto l = static_cast<std::size_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  const auto s = static_cast<std::size_t>(state.range(3));
  Rng rng(4);
  const auto seq = random_tensor(rng, {t, l});
  const auto w = random_tensor(rng, {k, s, l});
  const auto b = random_tensor(rng, {k});
  for (auto _ : state) benchmark::DoNotOptimize(transnet::nn::conv1d_forward(seq, w, b));
}
BENCHMARK(BM_Conv1dForward)->Args({8, 64, 32, 2})->Args({8, 1024, 64, 2})->Unit(benchmark::kMicrosecond);

}  // namespace
