#include <benchmark/benchmark.h>

#include <random>

#include "lowlight/adam.hpp"
#include "lowlight/model.hpp"
#include "lowlight/ops.hpp"

using namespace lowlight;
using engine::Tensor;

namespace {

Tensor filled(engine::Shape shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  for (auto& v : t.mutable_data()) v = u(rng);
  return t;
}

// args: channels, extent, kernel
void conv_forward(benchmark::State& state, engine::ConvAlgorithm algo) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  const Tensor x = filled({1, c, hw, hw}, 1);
  const Tensor w = filled({c, c, k, k}, 2, -0.1f, 0.1f);
  const Tensor b = filled({c}, 3);
  const engine::ConvParams p{1, static_cast<int>(k / 2), algo};
  for (auto _ : state) benchmark::DoNotOptimize(engine::conv2d(x, w, b, p));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c * c * k * k * hw * hw));
}

void BM_ConvDirect(benchmark::State& s) { conv_forward(s, engine::ConvAlgorithm::kDirect); }
void BM_ConvIm2col(benchmark::State& s) { conv_forward(s, engine::ConvAlgorithm::kIm2col); }

void conv_args(benchmark::internal::Benchmark* b) {
  for (int k : {1, 3, 5, 7}) b->Args({8, 64, k});
  b->Args({32, 32, 3});
  b->Args({64, 16, 3});
}

BENCHMARK(BM_ConvDirect)->Apply(conv_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConvIm2col)->Apply(conv_args)->Unit(benchmark::kMicrosecond);

void BM_ConvBackward(benchmark::State& state) {
  const auto hw = static_cast<std::size_t>(state.range(0));
  const Tensor x = filled({1, 8, hw, hw}, 1);
  const Tensor w = filled({8, 8, 3, 3}, 2, -0.1f, 0.1f);
  const Tensor up = filled({1, 8, hw, hw}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(engine::conv2d_backward(up, x, w, {1, 1}));
}
BENCHMARK(BM_ConvBackward)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

// Desk network forward on a square packed input; arg is the packed extent.
void BM_UNetForward(benchmark::State& state) {
  const auto net = model::build_unet(model::UNetConfig{}, 1);
  const auto hw = static_cast<std::size_t>(state.range(0));
  const Tensor x = filled({1, 4, hw, hw}, 5, 0.0f, 1.0f);
  for (auto _ : state) benchmark::DoNotOptimize(model::run_network(net, x, 0.0));
}
BENCHMARK(BM_UNetForward)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_UNetForwardModulated(benchmark::State& state) {
  auto net = model::build_unet(model::UNetConfig{}, 1);
  model::insert_modulation(net, static_cast<int>(state.range(1)));
  const auto hw = static_cast<std::size_t>(state.range(0));
  const Tensor x = filled({1, 4, hw, hw}, 5, 0.0f, 1.0f);
  for (auto _ : state) benchmark::DoNotOptimize(model::run_network(net, x, 0.5));
}
BENCHMARK(BM_UNetForwardModulated)->Args({128, 1})->Args({128, 3})->Args({128, 7})
    ->Unit(benchmark::kMillisecond);

// One Adam step on a desk-sized batch of 64x64 packed patches.
void BM_TrainStep(benchmark::State& state) {
  auto net = model::build_unet(model::UNetConfig{}, 1);
  auto params = net.trainable_tensors();
  for (auto& p : params) p.tensor.set_requires_grad(true);
  engine::AdamState adam(params, {});
  const Tensor x = filled({1, 4, 64, 64}, 6, 0.0f, 1.0f);
  const Tensor y = filled({1, 12, 64, 64}, 7, 0.0f, 1.0f);
  for (auto _ : state) {
    for (auto& p : params) p.tensor.zero_grad();
    engine::GradTape tape;
    Tensor loss = engine::l1_loss(model::run_network(net, x, 0.0), y);
    tape.backward(loss);
    engine::adam_step(params, adam);
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
