// Parallel kernels against the serial reference at policy-sized shapes.

#include <benchmark/benchmark.h>

#include <vector>

#include "unfold/kernels.hpp"
#include "unfold/rng.hpp"

namespace {

unfold::ConvShape shape_of(const benchmark::State& state) {
  return {static_cast<int>(state.range(0)), static_cast<int>(state.range(1)),
          static_cast<int>(state.range(2)), static_cast<int>(state.range(3)),
          static_cast<int>(state.range(3))};
}

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  unfold::Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const auto s = shape_of(state);
  const auto in = random_vec(s.in_size(), 1);
  const auto w = random_vec(s.weight_size(), 2);
  const auto b = random_vec(static_cast<std::size_t>(s.out_ch), 3);
  std::vector<float> out(s.out_size());
  for (auto _ : state) {
    if constexpr (Parallel) unfold::kernels::conv3x3_forward<float>(s, in, w, b, out);
    else unfold::reference::conv3x3_forward<float>(s, in, w, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.out_size()) * s.in_ch * 9);
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const auto s = shape_of(state);
  const auto in = random_vec(s.in_size(), 1);
  const auto w = random_vec(s.weight_size(), 2);
  const auto g = random_vec(s.out_size(), 3);
  std::vector<float> gin(s.in_size()), gw(s.weight_size()), gb(static_cast<std::size_t>(s.out_ch));
  for (auto _ : state) {
    if constexpr (Parallel) unfold::kernels::conv3x3_backward<float>(s, in, w, g, gin, gw, gb);
    else unfold::reference::conv3x3_backward<float>(s, in, w, g, gin, gw, gb);
    benchmark::DoNotOptimize(gw.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.out_size()) * s.in_ch * 9);
}

// batch, in_ch, out_ch, size
#define CONV_ARGS ->Args({16, 16, 32, 64})->Args({16, 32, 16, 64})->Args({16, 8, 16, 32})

BENCHMARK(BM_ConvForward<true>) CONV_ARGS;
BENCHMARK(BM_ConvForward<false>) CONV_ARGS;
BENCHMARK(BM_ConvBackward<true>) CONV_ARGS;
BENCHMARK(BM_ConvBackward<false>) CONV_ARGS;

}  // namespace

BENCHMARK_MAIN();
