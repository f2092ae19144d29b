// Serial reference vs OpenMP for the three hot kernels. Arg 0 = serial,
// 1 = parallel; results are identical by construction, only time differs.

#include <benchmark/benchmark.h>

#include "hwfp/attacks.hpp"
#include "hwfp/experiment.hpp"
#include "hwfp/forest.hpp"

using namespace hwfp;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::Parallel : Exec::Serial; }

Dataset synthetic(std::size_t rows) {
  Dataset d;
  d.cols = 4;
  Rng rng = make_rng(1, 1);
  for (std::size_t i = 0; i < rows; ++i) {
    const double f[4] = {uniform01(rng), uniform01(rng), uniform01(rng), uniform01(rng)};
    d.add(f, 3 * f[0] + f[1] * f[2] + 0.1 * uniform01(rng));
  }
  return d;
}

void BM_ForestFit(benchmark::State& state) {
  const Dataset d = synthetic(2000);
  for (auto _ : state) {
    auto f = ExtraTrees::fit(d, ForestParams{50, 4, 7}, exec_of(state));
    benchmark::DoNotOptimize(f);
  }
}
BENCHMARK(BM_ForestFit)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_TamperSuccess(benchmark::State& state) {
  MappingConfig m;
  m.total_num = 2;
  m.enabled_specs = {TaskSpec{Feature::Sram, {100}}};
  for (auto _ : state) {
    auto est = tamper_success(m, 100, 2000, 2, 3, exec_of(state));
    benchmark::DoNotOptimize(est);
  }
}
BENCHMARK(BM_TamperSuccess)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

const Testbed& bed() {
  static const auto b = [] {
    TestbedConfig cfg;
    cfg.devices = 4;
    cfg.pairs_per_feature = 400;
    return Testbed::build(cfg);
  }();
  return *b;
}

void BM_AuthTrials(benchmark::State& state) {
  const auto& b = bed();
  for (auto _ : state) {
    auto est = run_hw_mimic(b.devices()[1], b.devices()[0].device_id, b.backend(), 500, 5,
                            exec_of(state));
    benchmark::DoNotOptimize(est);
  }
}
BENCHMARK(BM_AuthTrials)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
