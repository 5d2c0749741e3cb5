// Serial reference kernels against their OpenMP counterparts.
//   ./bench_kernels --benchmark_filter=Conv

#include <benchmark/benchmark.h>
#include <omp.h>

#include <random>
#include <vector>

#include "mncd/kernels.hpp"

using namespace mncd::kernels;

namespace {

std::vector<float> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.f, 1.f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

// args: channels, spatial size, kernel, stride
ConvGeometry conv_geometry(const benchmark::State& state) {
  ConvGeometry g;
  g.batch = 2;
  g.in_channels = g.out_channels = state.range(0);
  g.in_h = g.in_w = state.range(1);
  g.kernel_h = g.kernel_w = state.range(2);
  g.stride = state.range(3);
  g.padding = g.kernel_h / 2;
  return g;
}

void set_counters(benchmark::State& state, double flops) {
  state.counters["GFLOP/s"] =
      benchmark::Counter(flops * static_cast<double>(state.iterations()) * 1e-9, benchmark::Counter::kIsRate);
  state.counters["threads"] = omp_get_max_threads();
}

template <Exec E>
void BM_ConvForward(benchmark::State& state) {
  const ConvGeometry g = conv_geometry(state);
  const auto in = noise(static_cast<std::size_t>(g.batch * g.in_channels * g.in_h * g.in_w), 1);
  const auto w = noise(static_cast<std::size_t>(g.out_channels * g.in_channels * g.kernel_h * g.kernel_w), 2);
  const auto b = noise(static_cast<std::size_t>(g.out_channels), 3);
  std::vector<float> out(static_cast<std::size_t>(g.batch * g.out_channels * g.out_h() * g.out_w()));
  for (auto _ : state) {
    conv2d_forward(g, in.data(), w.data(), b.data(), out.data(), E);
    benchmark::DoNotOptimize(out.data());
  }
  set_counters(state, 2.0 * static_cast<double>(out.size()) * static_cast<double>(g.in_channels * g.kernel_h * g.kernel_w));
}

template <Exec E>
void BM_ConvBackwardWeight(benchmark::State& state) {
  const ConvGeometry g = conv_geometry(state);
  const auto in = noise(static_cast<std::size_t>(g.batch * g.in_channels * g.in_h * g.in_w), 1);
  const auto go = noise(static_cast<std::size_t>(g.batch * g.out_channels * g.out_h() * g.out_w()), 4);
  std::vector<float> gw(static_cast<std::size_t>(g.out_channels * g.in_channels * g.kernel_h * g.kernel_w));
  for (auto _ : state) {
    conv2d_backward_weight(g, go.data(), in.data(), gw.data(), E);
    benchmark::DoNotOptimize(gw.data());
  }
  set_counters(state, 2.0 * static_cast<double>(go.size()) * static_cast<double>(g.in_channels * g.kernel_h * g.kernel_w));
}

template <Exec E>
void BM_ChannelMix(benchmark::State& state) {
  MixGeometry g;
  g.batch = 2;
  g.in_channels = g.out_channels = state.range(0);
  g.plane = state.range(1) * state.range(1);
  const auto w = noise(static_cast<std::size_t>(g.in_channels * g.out_channels), 5);
  const auto x = noise(static_cast<std::size_t>(g.batch * g.in_channels * g.plane), 6);
  std::vector<float> out(static_cast<std::size_t>(g.batch * g.out_channels * g.plane));
  for (auto _ : state) {
    channel_mix_forward(g, w.data(), x.data(), out.data(), E);
    benchmark::DoNotOptimize(out.data());
  }
  set_counters(state, 2.0 * static_cast<double>(out.size()) * static_cast<double>(g.in_channels));
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->ArgNames({"C", "HW", "k", "s"});
  b->Args({16, 64, 3, 1})->Args({32, 32, 3, 1})->Args({64, 16, 3, 2})->Args({64, 16, 1, 1});
  b->Unit(benchmark::kMicrosecond);
}

void mix_args(benchmark::internal::Benchmark* b) {
  b->ArgNames({"C", "HW"});
  b->Args({16, 64})->Args({64, 16})->Args({128, 8});
  b->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK(BM_ConvForward<Exec::serial>)->Apply(conv_args);
BENCHMARK(BM_ConvForward<Exec::parallel>)->Apply(conv_args);
BENCHMARK(BM_ConvBackwardWeight<Exec::serial>)->Apply(conv_args);
BENCHMARK(BM_ConvBackwardWeight<Exec::parallel>)->Apply(conv_args);
BENCHMARK(BM_ChannelMix<Exec::serial>)->Apply(mix_args);
BENCHMARK(BM_ChannelMix<Exec::parallel>)->Apply(mix_args);

BENCHMARK_MAIN();
