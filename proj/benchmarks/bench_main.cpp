#include <benchmark/benchmark.h>

#include "robustcast/faults.hpp"
#include "robustcast/forecast.hpp"
#include "robustcast/score.hpp"
#include "test_util.hpp"

using namespace robustcast;

namespace {

WindowSet pool(std::size_t rows, std::size_t m, WindowShape shape) {
  auto ds = testutil::dataset(testutil::daily(rows, m, 1, 0.2), testutil::schema(m, testutil::iota(m)));
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + shape.span() <= rows; ++s) starts.push_back(s);
  return WindowSet(ds, starts, shape);
}

// One draw plus kernel application on a 96 x m window.
void BM_Perturb(benchmark::State& state) {
  const auto sc = kBenchmarkScenarios[static_cast<std::size_t>(state.range(0))];
  const auto m = static_cast<std::size_t>(state.range(1));
  const auto sch = testutil::schema(m, {0});
  const Matrix x = testutil::white_noise(96, m, 3);
  Rng rng(7);
  for (auto _ : state) {
    const auto d = draw_perturbation(benchmark_spec(sc), ChannelRule::coupled(), rng.uniform01(), 96, sch, rng);
    benchmark::DoNotOptimize(apply_perturbation(x, d));
  }
  state.SetLabel(std::string(scenario_name(sc)));
}
BENCHMARK(BM_Perturb)->ArgsProduct({benchmark::CreateDenseRange(0, 7, 1), {7, 64}});

void BM_EvaluateSeasonalNaive(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto p = pool(3000, m, {96, 96});
  EvalConfig cfg;
  cfg.K = 1000;
  cfg.eval_seed = 1;
  cfg.workers = static_cast<std::size_t>(state.range(1));
  const SeasonalNaive f(24, 96, testutil::iota(m));
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(f, p, cfg, "bench"));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.K * (1 + cfg.scenarios.size())));
}
BENCHMARK(BM_EvaluateSeasonalNaive)->Args({7, 1})->Args({7, 4})->Args({32, 1})->UseRealTime()->Unit(benchmark::kMillisecond);

void BM_EvaluateLinear(benchmark::State& state) {
  const auto p = pool(3000, 7, {96, 24});
  const auto model = fit_linear(p, 0.1, 1);
  EvalConfig cfg;
  cfg.K = 1000;
  cfg.eval_seed = 1;
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(model, p, cfg, "bench"));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.K * (1 + cfg.scenarios.size())));
}
BENCHMARK(BM_EvaluateLinear)->UseRealTime()->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
