#include <benchmark/benchmark.h>

#include "cdl/perturbation.hpp"
#include "support/scenarios.hpp"

using namespace cdl;

static void BM_ResponseEntry(benchmark::State& state) {
  Scenario s = cdl_test::respond_scenario();
  s.grid.n_t = static_cast<int>(state.range(0));
  PerturbationEngine eng(s);
  for (auto _ : state) benchmark::DoNotOptimize(eng.entry(2));
}
BENCHMARK(BM_ResponseEntry)->Arg(241)->Arg(481);

static void BM_SorkinCoefficient(benchmark::State& state) {
  Scenario s = cdl_test::sorkin_scenario();
  s.grid.n_t = 241;
  for (auto _ : state) benchmark::DoNotOptimize(sorkin_coefficient(s, s.oracle.modes));
}
BENCHMARK(BM_SorkinCoefficient);
