// Serial vs OpenMP kernels. Arg 0 = serial, 1 = parallel.

#include <benchmark/benchmark.h>

#include "calib/bounds.hpp"
#include "calib/experiments.hpp"
#include "calib/synthetic.hpp"

using namespace calib;

namespace {

Execution mode(const benchmark::State& state)
{
    return state.range(0) ? Execution::Parallel : Execution::Serial;
}

SyntheticSpec1D sine_spec()
{
    SyntheticSpec1D s;
    s.confidence.lo = 0.5;
    s.confidence.hi = 1.0;
    s.map = MiscalibrationMap1D::sine(0.003, 3.0);
    s.n = 1000;
    return s;
}

void BM_ConvergenceCells(benchmark::State& state)
{
    ConvergenceConfig cfg;
    cfg.spec = sine_spec();
    cfg.n_grid = {200, 1000, 5000, 10000};
    cfg.seeds = 20;
    for (auto _ : state)
        benchmark::DoNotOptimize(convergence_experiment(cfg, mode(state)));
}
BENCHMARK(BM_ConvergenceCells)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_CeKOracle(benchmark::State& state)
{
    SyntheticSpecK spec;
    spec.num_classes = 3;
    spec.concentration = {1.0, 1.0, 1.0};
    spec.map = SimplexMap::mixture_uniform(0.02);
    for (auto _ : state)
        benchmark::DoNotOptimize(state.range(0) ? true_ce_k(spec, 1000000)
                                                : true_ce_k_serial(spec, 1000000));
}
BENCHMARK(BM_CeKOracle)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_BoundCoverage(benchmark::State& state)
{
    const auto spec = sine_spec();
    for (auto _ : state)
        benchmark::DoNotOptimize(
            state.range(0) ? mc_validate_bound(BoundKind::TotalBiasTest, spec, 10, 0.05, 500)
                           : mc_validate_bound_serial(BoundKind::TotalBiasTest, spec, 10, 0.05, 500));
}
BENCHMARK(BM_BoundCoverage)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
