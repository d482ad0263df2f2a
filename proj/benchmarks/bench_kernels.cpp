#include <benchmark/benchmark.h>

#include <filesystem>
#include <random>

#include "apbit/apconv.hpp"
#include "apbit/apmm.hpp"
#include "apbit/apnn.hpp"
#include "apbit/reference.hpp"
#include "apbit/tuner.hpp"
#include "oracle.hpp"

using namespace apbit;

namespace {

// args: n (square M=N=K), p, q
void BM_apmm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const int p = static_cast<int>(state.range(1)), q = static_cast<int>(state.range(2));
  std::mt19937_64 rng(1);
  const auto w = decompose(oracle::random_values({n, n}, p, Encoding::ZeroOne, rng), p, Encoding::ZeroOne);
  const auto x = decompose(oracle::random_values({n, n}, q, Encoding::ZeroOne, rng), q, Encoding::ZeroOne);
  const auto cfg = autotune(n, n, n, p, q);
  for (auto _ : state) benchmark::DoNotOptimize(apmm(w, x, cfg));
  state.counters["MACs/s"] = benchmark::Counter(static_cast<double>(n * n * n), benchmark::Counter::kIsIterationInvariantRate);
  state.SetLabel("w" + std::to_string(p) + "a" + std::to_string(q) + " " + cfg.to_string());
}
BENCHMARK(BM_apmm)
    ->ArgsProduct({{128, 512, 1024}, {1}, {1, 2}})
    ->Args({1024, 2, 2})
    ->Args({1024, 4, 4})
    ->Unit(benchmark::kMillisecond);

void BM_reference_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  const auto a = oracle::random_values({n, n}, 1, Encoding::ZeroOne, rng);
  const auto b = oracle::random_values({n, n}, 1, Encoding::ZeroOne, rng);
  for (auto _ : state) benchmark::DoNotOptimize(reference_gemm(a, b));
  state.counters["MACs/s"] = benchmark::Counter(static_cast<double>(n * n * n), benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_reference_gemm)->Arg(128)->Arg(512)->Arg(1024)->Unit(benchmark::kMillisecond);

// args: spatial size, p, q; 3x3 conv, 128 -> 128 channels, pad 1
void BM_apconv(benchmark::State& state) {
  const auto hw = static_cast<std::size_t>(state.range(0));
  const int p = static_cast<int>(state.range(1)), q = static_cast<int>(state.range(2));
  const ConvShape s{1, 128, hw, hw, 128, 3, 1, 1};
  std::mt19937_64 rng(2);
  const auto w = pack_conv_weights(oracle::random_values({128, 128, 3, 3}, p, Encoding::ZeroOne, rng), p, Encoding::ZeroOne);
  const auto x = to_channel_major(oracle::random_values({1, hw, hw, 128}, q, Encoding::ZeroOne, rng), LayoutTag::NHWC, q,
                                  Encoding::ZeroOne);
  const auto cfg = autotune(s.out_channels, s.out_pixels(), 9 * s.in_channels, p, q);
  for (auto _ : state) benchmark::DoNotOptimize(apconv(w, x, s, cfg));
  state.SetLabel("w" + std::to_string(p) + "a" + std::to_string(q) + " " + cfg.to_string());
}
BENCHMARK(BM_apconv)->ArgsProduct({{14, 28}, {1, 2}, {2}})->Unit(benchmark::kMillisecond);

// arg 0: model index, arg 1: fusion on/off
void BM_model(benchmark::State& state) {
  static const char* const names[] = {"toy_mlp", "toy_cnn"};
  const std::filesystem::path dir = APBIT_MODELS_DIR;
  const std::string name = names[state.range(0)];
  const auto g = load_model(dir / (name + ".yaml"));
  const auto image = load_image(dir / (name + "_image.bpt"));
  const RunOptions opts{state.range(1) != 0, 1, std::nullopt};
  std::uint64_t bits = 0;
  for (auto _ : state) {
    const auto r = run_model(g, image, opts);
    bits = r.traffic.total_bits();
    benchmark::DoNotOptimize(r.logits);
  }
  state.counters["traffic_B"] = static_cast<double>(bits) / 8.0;
  state.SetLabel(name + (opts.fusion ? " fused" : " unfused"));
}
BENCHMARK(BM_model)->ArgsProduct({{0, 1}, {1, 0}})->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
