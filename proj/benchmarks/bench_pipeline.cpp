#include <benchmark/benchmark.h>

#include "lowlight/metrics.hpp"
#include "lowlight/model.hpp"
#include "lowlight/sensor_sim.hpp"
#include "lowlight/service.hpp"

using namespace lowlight;

namespace {

raw::RawImage dark_mosaic(int side) {
  const auto scene = sim::generate_scene(3, side, side, sim::SceneStyle::kIndoor);
  return sim::sample_noisy_raw(sim::expose(sim::mosaic(scene), 0.1, 10.0), {}, 9);
}

void BM_GenerateScene(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(sim::generate_scene(1, side, side, sim::SceneStyle::kOutdoor));
}
BENCHMARK(BM_GenerateScene)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_SampleNoise(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto signal = sim::mosaic(sim::generate_scene(1, side, side, sim::SceneStyle::kOutdoor));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sim::sample_noisy_raw(signal, {}, ++seed));
  state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_SampleNoise)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_PackUnpack(benchmark::State& state) {
  const auto mosaic = dark_mosaic(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(raw::unpack_bayer(raw::pack_bayer(mosaic)));
}
BENCHMARK(BM_PackUnpack)->Arg(256)->Arg(1024)->Unit(benchmark::kMicrosecond);

void BM_Ssim(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const auto a = sim::render_reference_srgb(sim::generate_scene(1, side, side, sim::SceneStyle::kIndoor));
  const auto b = sim::render_reference_srgb(sim::generate_scene(2, side, side, sim::SceneStyle::kIndoor));
  for (auto _ : state) benchmark::DoNotOptimize(eval::ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

// Service preview path at the default scale: amplify, downscale, crop and
// render through a modulated desk network.
void BM_PreviewRender(benchmark::State& state) {
  auto net = model::build_unet(model::UNetConfig{}, 1);
  model::insert_modulation(net, 3);
  const auto packed = raw::pack_bayer(dark_mosaic(static_cast<int>(state.range(0))));
  const int multiple = net.config.spatial_multiple();
  for (auto _ : state) {
    const auto input = service::preview_input(packed, 40.0, 2, multiple);
    benchmark::DoNotOptimize(model::render(net, input, 0.6));
  }
}
BENCHMARK(BM_PreviewRender)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
