#include <benchmark/benchmark.h>

#include "cdl/exactsim.hpp"
#include "support/scenarios.hpp"

using namespace cdl;

static void BM_DenseScatteringStep(benchmark::State& state) {
  Scenario s = cdl_test::nosignal_scenario(false);
  s.oracle.fock_cutoff = static_cast<int>(state.range(0));
  ExactEngine eng(s, SpaceInfo::from_scenario(s));
  for (auto _ : state)
    benchmark::DoNotOptimize(eng.scattering_window(eng.all_labels(), 0.4, 0.6, 0.2));
}
BENCHMARK(BM_DenseScatteringStep)->Arg(3)->Arg(4);

static void BM_KrylovWindow(benchmark::State& state) {
  Scenario s = cdl_test::sorkin_scenario();
  ExactEngine eng(s, SpaceInfo::from_scenario(s));
  VectorXc psi = eng.initial_pure_state();
  for (auto _ : state)
    benchmark::DoNotOptimize(eng.evolve_state(psi, 0.4, 0.6, 0.01, eng.all_labels()));
}
BENCHMARK(BM_KrylovWindow);
