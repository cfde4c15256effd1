#include <benchmark/benchmark.h>

#include "cdl/field.hpp"

using namespace cdl;

static void BM_PauliJordan(benchmark::State& state) {
  FieldSpec spec{20.0, 1.0, static_cast<int>(state.range(0))};
  Event x{1.3, 0.4}, y{0.1, -2.0};
  for (auto _ : state) benchmark::DoNotOptimize(pauli_jordan(x, y, spec));
}
BENCHMARK(BM_PauliJordan)->Arg(64)->Arg(128);

static void BM_SmearedModeCoeffs(benchmark::State& state) {
  FieldSpec spec{20.0, 1.0, 64};
  SpacetimeFunction g = SpacetimeFunction::separable_bump(0.0, 0.5, 0.0, 0.5);
  for (auto _ : state)
    benchmark::DoNotOptimize(smeared_mode_coeffs(g, spec, static_cast<int>(state.range(0)), -1.0));
}
BENCHMARK(BM_SmearedModeCoeffs)->Arg(24)->Arg(48);
