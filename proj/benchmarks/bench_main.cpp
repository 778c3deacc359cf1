#include <benchmark/benchmark.h>

#include "vlmech/mrope.hpp"
#include "vlmech/niah.hpp"
#include "vlmech/ops.hpp"
#include "vlmech/rng.hpp"
#include "vlmech/vision_stack.hpp"

using namespace vlmech;

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = Tensor::randn({n, n}, rng), b = Tensor::randn({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 128);

static void BM_ApplyMrope(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const auto alloc = interleaved_allocation(128);
  const Tensor x = Tensor::randn({rows, 128}, rng);
  std::vector<PositionId> ids;
  for (std::size_t i = 0; i < rows; ++i) ids.push_back({i, i % 32, i % 17});
  for (auto _ : state) benchmark::DoNotOptimize(apply_mrope(x, ids, alloc));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ApplyMrope)->RangeMultiplier(4)->Range(64, 4096);

static void BM_NiahProbe(benchmark::State& state) {
  const NiahConfig cfg;
  const auto s = build_niah_sequence_groups(cfg, static_cast<std::size_t>(state.range(0)), 0.5, 3);
  const auto alloc = build_frequency_allocation(cfg.head_dim, cfg.rope_base, cfg.scheme);
  for (auto _ : state) benchmark::DoNotOptimize(run_niah_probe(s, s.query, alloc));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_NiahProbe)->RangeMultiplier(4)->Range(64, 4096);

static void BM_Merge2x2(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const vision::ModelConfig cfg;
  const auto params = vision::init_params(cfg, 4);
  Rng rng(5);
  const Tensor feats = Tensor::randn({side * side, cfg.dim}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(vision::merge_2x2(feats, side, side, params.main_merger, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_Merge2x2)->RangeMultiplier(2)->Range(4, 64);
BENCHMARK_MAIN();
