#include <benchmark/benchmark.h>

#include "ddl/histogram.hpp"
#include "ddl/rng.hpp"

using namespace ddl;

namespace {

Vector random_similarities(std::size_t count) {
    Rng rng(42);
    Vector s(count);
    for (double& x : s) x = 2.0 * rng.uniform() - 1.0;
    return s;
}

} // namespace

static void HistogramEstimate(benchmark::State& state) {
    const Vector sims = random_similarities(static_cast<std::size_t>(state.range(0)));
    const std::size_t bins = 100;
    const double gamma = default_gamma(bins);
    for (auto _ : state) {
        SoftHistogram h = SoftHistogram::estimate(sims, bins, gamma);
        benchmark::DoNotOptimize(h.masses().data());
    }
}
BENCHMARK(HistogramEstimate)->Arg(16)->Arg(24)->Arg(48);

static void HistogramMassGradient(benchmark::State& state) {
    const Vector sims = random_similarities(static_cast<std::size_t>(state.range(0)));
    const std::size_t bins = 100;
    const SoftHistogram h = SoftHistogram::estimate(sims, bins, default_gamma(bins));
    for (auto _ : state) {
        Matrix g = h.mass_gradient();
        benchmark::DoNotOptimize(g.data());
    }
}
BENCHMARK(HistogramMassGradient)->Arg(16)->Arg(24)->Arg(48);

BENCHMARK_MAIN();
