// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include "patchbag/kernels.hpp"
#include "patchbag/synthetic.hpp"

namespace kn = patchbag::kernels;
using patchbag::FloatMatrix;
using patchbag::RgbImage;

namespace {

FloatMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  patchbag::Rng rng(seed);
  FloatMatrix m(rows, cols);
  for (float& v : m.data) v = static_cast<float>(rng.uniform());
  return m;
}

template <bool Parallel>
void BM_AssignNearest(benchmark::State& state) {
  const auto points = random_matrix(static_cast<std::size_t>(state.range(0)), 16, 1);
  const auto centroids = random_matrix(100, 16, 2);
  std::vector<std::uint32_t> labels(points.rows);
  std::vector<double> dist(points.rows);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kn::assign_nearest(points, centroids, labels, dist);
    } else {
      kn::serial::assign_nearest(points, centroids, labels, dist);
    }
    benchmark::DoNotOptimize(labels.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_RotateImage(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const RgbImage img = patchbag::texture_image(patchbag::ClassLabel::InSitu, side, side, 3);
  const auto map = kn::RotationMap::about(side / 2.0, side / 2.0, 33.0);
  const patchbag::Rect out{0, 0, side, side};
  for (auto _ : state) {
    RgbImage r = Parallel ? kn::rotate_image(img, map, out) : kn::serial::rotate_image(img, map, out);
    benchmark::DoNotOptimize(r.pixels.data());
  }
  state.SetItemsProcessed(state.iterations() * side * side);
}

template <bool Parallel>
void BM_DescribePatches(benchmark::State& state) {
  std::vector<RgbImage> patches;
  for (int i = 0; i < state.range(0); ++i) {
    patches.push_back(patchbag::texture_image(patchbag::ClassLabel::Benign, 256, 256, i));
  }
  std::vector<const RgbImage*> ptrs;
  for (const auto& p : patches) ptrs.push_back(&p);
  for (auto _ : state) {
    auto d = Parallel ? kn::describe_patches(ptrs, 4) : kn::serial::describe_patches(ptrs, 4);
    benchmark::DoNotOptimize(d.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

template <bool Parallel>
void BM_WindowCounts(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(side) * side);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (i * 7919) % 3 != 0;
  for (auto _ : state) {
    auto c = Parallel ? kn::window_counts(mask, side, side, 256)
                      : kn::serial::window_counts(mask, side, side, 256);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * side * side);
}

}  // namespace

BENCHMARK(BM_AssignNearest<false>)->Arg(1 << 14)->Arg(1 << 16);
BENCHMARK(BM_AssignNearest<true>)->Arg(1 << 14)->Arg(1 << 16);
BENCHMARK(BM_RotateImage<false>)->Arg(1024)->Arg(2048);
BENCHMARK(BM_RotateImage<true>)->Arg(1024)->Arg(2048);
BENCHMARK(BM_DescribePatches<false>)->Arg(16)->Arg(64);
BENCHMARK(BM_DescribePatches<true>)->Arg(16)->Arg(64);
BENCHMARK(BM_WindowCounts<false>)->Arg(2048)->Arg(4096);
BENCHMARK(BM_WindowCounts<true>)->Arg(2048)->Arg(4096);

BENCHMARK_MAIN();
