#include <benchmark/benchmark.h>

#include <vector>

#include "slicetrack/kernels.hpp"
#include "slicetrack/rng.hpp"

using namespace slicetrack;

namespace {

constexpr std::size_t kW = 512, kH = 512, kZ = 100;

const std::vector<float>& hu_volume() {
  static const std::vector<float> v = [] {
    std::vector<float> out(kW * kH * kZ);
    Xoshiro256 rng(1);
    for (auto& x : out) x = static_cast<float>(static_cast<int>(rng.uniform(4096)) - 1024);
    return out;
  }();
  return v;
}

const std::vector<std::uint8_t>& mask(std::uint64_t seed) {
  static std::vector<std::uint8_t> a, b;
  auto& m = seed == 1 ? a : b;
  if (m.empty()) {
    m.resize(kW * kH * kZ);
    Xoshiro256 rng(seed);
    for (auto& x : m) x = rng.uniform(4) == 0;
  }
  return m;
}

template <auto Fn>
void bm_window(benchmark::State& state) {
  const auto& hu = hu_volume();
  std::vector<std::uint8_t> out(hu.size());
  for (auto _ : state) {
    Fn(hu, 50.0, 400.0, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetBytesProcessed(static_cast<std::int64_t>(state.iterations() * hu.size() * sizeof(float)));
}

template <auto Fn>
void bm_count(benchmark::State& state) {
  const auto& m = mask(1);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(m));
}

template <auto Fn>
void bm_overlap(benchmark::State& state) {
  const auto& a = mask(1);
  const auto& b = mask(2);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(a, b));
}

template <auto Fn>
void bm_dilate(benchmark::State& state) {
  const auto& m = mask(1);
  std::vector<std::uint8_t> in(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(kW * kH)), out(kW * kH);
  for (auto _ : state) {
    Fn(in, static_cast<int>(kW), static_cast<int>(kH), static_cast<int>(state.range(0)), out);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(bm_window<kernels::serial::window_u8>)->Name("window/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_window<kernels::parallel::window_u8>)->Name("window/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_count<kernels::serial::count_nonzero>)->Name("count/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_count<kernels::parallel::count_nonzero>)->Name("count/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_overlap<kernels::serial::overlap>)->Name("overlap/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_overlap<kernels::parallel::overlap>)->Name("overlap/parallel")->Unit(benchmark::kMillisecond);
BENCHMARK(bm_dilate<kernels::serial::dilate_chebyshev>)->Name("dilate/serial")->Arg(1)->Arg(3)->Unit(benchmark::kMicrosecond);
BENCHMARK(bm_dilate<kernels::parallel::dilate_chebyshev>)->Name("dilate/parallel")->Arg(1)->Arg(3)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
