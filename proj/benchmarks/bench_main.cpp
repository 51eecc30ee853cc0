#include <benchmark/benchmark.h>

#include "ganmem/autodiff.hpp"
#include "ganmem/compress.hpp"
#include "ganmem/modulation.hpp"
#include "ganmem/rng.hpp"

using namespace ganmem;

static void BM_MfilmModulate(benchmark::State& state) {
  int d = static_cast<int>(state.range(0));
  Rng rng(1);
  FCLayer layer{rng.normal_tensor({d, d}), rng.normal_tensor({d})};
  LayerStats stats = row_stats(layer);
  FCStyle style = init_new_fc_style(d);
  for (auto _ : state) {
    FCLayer out = mfilm_modulate(layer, stats, style);
    benchmark::DoNotOptimize(out.W.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(d) * d);
}
BENCHMARK(BM_MfilmModulate)->Arg(128)->Arg(512);

static void BM_MadafmModulate(benchmark::State& state) {
  int c = static_cast<int>(state.range(0));
  Rng rng(2);
  ConvLayer layer{rng.normal_tensor({c, c, 3, 3}), rng.normal_tensor({c})};
  LayerStats stats = kernel_stats(layer);
  ConvStyle style = init_new_conv_style(c, c);
  for (auto _ : state) {
    ConvLayer out = madafm_modulate(layer, stats, style);
    benchmark::DoNotOptimize(out.K.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(c) * c * 9);
}
BENCHMARK(BM_MadafmModulate)->Arg(32)->Arg(128);

static void BM_ConvForward(benchmark::State& state) {
  int hw = static_cast<int>(state.range(0));
  Rng rng(3);
  Tensor x = rng.normal_tensor({8, 32, hw, hw});
  Tensor k = rng.normal_tensor({32, 32, 3, 3}, 0.06);
  for (auto _ : state) {
    ad::Var y = ad::conv2d(ad::constant(x), ad::constant(k), 1);
    benchmark::DoNotOptimize(y.val().data());
  }
}
BENCHMARK(BM_ConvForward)->Arg(8)->Arg(16)->Arg(32);

static void BM_EnergyTruncate(benchmark::State& state) {
  int n = static_cast<int>(state.range(0));
  Rng rng(4);
  Tensor m = rng.normal_tensor({n, n});
  for (auto _ : state) {
    SvdTriple t = energy_truncate(m, 90.0);
    benchmark::DoNotOptimize(t.s.data());
  }
}
BENCHMARK(BM_EnergyTruncate)->Arg(32)->Arg(64)->Arg(128);

BENCHMARK_MAIN();
