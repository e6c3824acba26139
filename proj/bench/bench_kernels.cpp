// Parallel kernels against their serial references, and the stored system
// matrix against on-the-fly tracing. Argument is the image side length; the
// geometry scales like the desk configuration (views = 2.8 n, detectors = 2 n).

#include <benchmark/benchmark.h>

#include <random>

#include "smdk/projector.hpp"
#include "smdk/tv.hpp"

namespace {

smdk::FanBeamGeometry geometry(std::size_t n) {
  smdk::FanBeamGeometry g;
  g.image_width_px = g.image_height_px = n;
  g.pixel_size_mm = 25.6 / static_cast<double>(n);
  g.num_views = n * 14 / 5;
  g.num_detectors = 2 * n;
  g.detector_pitch_mm = 51.2 / static_cast<double>(2 * n);
  return g;
}

smdk::Tensor3 random(std::size_t r, std::size_t c, std::size_t k) {
  std::mt19937_64 g(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  smdk::Tensor3 t(r, c, k);
  for (double& v : t.values()) v = u(g);
  return t;
}

constexpr std::size_t kBins = 4;

void BM_ForwardParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const smdk::Projector p(geometry(n), smdk::Projector::MatrixCache::kOff);
  const auto img = random(n, n, kBins);
  for (auto _ : state) benchmark::DoNotOptimize(p.forward(img));
}

void BM_ForwardCached(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const smdk::Projector p(geometry(n));
  const auto img = random(n, n, kBins);
  p.forward(img);  // build the matrix outside the timed loop
  for (auto _ : state) benchmark::DoNotOptimize(p.forward(img));
}

void BM_ForwardSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto g = geometry(n);
  const auto img = random(n, n, kBins);
  for (auto _ : state) benchmark::DoNotOptimize(smdk::serial::forward_project(img, g));
}

void BM_BackParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto g = geometry(n);
  const smdk::Projector p(g, smdk::Projector::MatrixCache::kOff);
  const auto sino = random(g.num_views, g.num_detectors, kBins);
  for (auto _ : state) benchmark::DoNotOptimize(p.back(sino));
}

void BM_BackCached(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto g = geometry(n);
  const smdk::Projector p(g);
  const auto sino = random(g.num_views, g.num_detectors, kBins);
  p.back(sino);
  for (auto _ : state) benchmark::DoNotOptimize(p.back(sino));
}

void BM_BackSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto g = geometry(n);
  const auto sino = random(g.num_views, g.num_detectors, kBins);
  for (auto _ : state) benchmark::DoNotOptimize(smdk::serial::back_project(sino, g));
}

void BM_TvGradientParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto img = random(n, n, 1);
  std::vector<double> grad(n * n);
  for (auto _ : state) {
    smdk::tv_gradient(img.values(), {n, n}, 1e-8, grad);
    benchmark::DoNotOptimize(grad.data());
  }
}

void BM_TvGradientSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto img = random(n, n, 1);
  std::vector<double> grad(n * n);
  for (auto _ : state) {
    smdk::serial::tv_gradient(img.values(), {n, n}, 1e-8, grad);
    benchmark::DoNotOptimize(grad.data());
  }
}

}  // namespace

BENCHMARK(BM_ForwardParallel)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardCached)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ForwardSerial)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BackParallel)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BackCached)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BackSerial)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TvGradientParallel)->Arg(128)->Arg(512)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_TvGradientSerial)->Arg(128)->Arg(512)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
