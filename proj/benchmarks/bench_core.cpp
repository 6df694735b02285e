#include <benchmark/benchmark.h>

#include <sdesched/control.hpp>
#include <sdesched/numerics.hpp>
#include <sdesched/sampler.hpp>
#include <sdesched/schedule.hpp>
#include <sdesched/targets.hpp>

using namespace sdesched;

namespace {

NoiseSchedule ou_schedule() { return make_catalog(ConstantParams{1.0, 2.0}, 3.0); }

void bm_lambert_w0(benchmark::State& state) {
    double z = 1e-6;
    for (auto _ : state) {
        benchmark::DoNotOptimize(lambert_w0(z));
        z = z < 1e6 ? z * 1.7 : 1e-6;
    }
}
BENCHMARK(bm_lambert_w0);

void bm_marginal_query(benchmark::State& state) {
    const NoiseSchedule schedule = ou_schedule();
    marginal_coeffs(schedule, 1.0);  // force the cache build outside the loop
    double t = 0.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(marginal_coeffs(schedule, t));
        t = t < 2.9 ? t + 0.0137 : 0.0;
    }
}
BENCHMARK(bm_marginal_query);

void bm_ei_step_coeffs(benchmark::State& state) {
    const NoiseSchedule schedule = make_catalog(LinearParams{0.1, 6.0}, 1.0);
    marginal_coeffs(schedule, 1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ei_step_coeffs(schedule, 0.25, 0.30));
    }
}
BENCHMARK(bm_ei_step_coeffs);

void bm_propagate_gaussian(benchmark::State& state) {
    const GaussianTarget target = GaussianTarget::isotropic(4, 1.0);
    const SamplerConfig config{ou_schedule(), Target(target), static_cast<int>(state.range(0)),
                               0.0, 1, 0, 0.0, 1};
    propagate_gaussian(config);
    for (auto _ : state) {
        benchmark::DoNotOptimize(propagate_gaussian(config));
    }
}
BENCHMARK(bm_propagate_gaussian)->Arg(32)->Arg(128);

void bm_sample_paths(benchmark::State& state) {
    const GaussianTarget target = GaussianTarget::isotropic(4, 1.0);
    const SamplerConfig config{ou_schedule(), Target(target), 32, 0.0,
                               static_cast<int>(state.range(0)), 1, 0.0, 1};
    sample_paths(config);
    for (auto _ : state) {
        benchmark::DoNotOptimize(sample_paths(config));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(bm_sample_paths)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
