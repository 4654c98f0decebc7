#include <benchmark/benchmark.h>

#include "ddl/losses.hpp"

#include "../tests/test_util.hpp"

using namespace ddl;
using ddl::testutil::LossPipeline;

static void FullObjective(benchmark::State& state) {
    // one full loss-and-gradient evaluation on a (K+1)-block batch
    const std::size_t b = static_cast<std::size_t>(state.range(0));
    const LossPipeline p = LossPipeline::random(99, b, 2, 100);
    const ForwardCache cache = encoder_forward(p.net, p.features);
    const auto sets = p.build_sets(cache.embeddings);
    for (auto _ : state) {
        LossReport report = ddl_total(cache.embeddings, p.labels, sets, p.net.head, p.weights,
                                      p.bins, p.gamma, p.order_pairs);
        benchmark::DoNotOptimize(report.embedding_grads.data());
    }
}
BENCHMARK(FullObjective)->Arg(8)->Arg(16)->Arg(24);

static void HardMining(benchmark::State& state) {
    const LossPipeline p = LossPipeline::random(123, static_cast<std::size_t>(state.range(0)), 1, 10);
    const ForwardCache cache = encoder_forward(p.net, p.features);
    for (auto _ : state) {
        SimilaritySet set = hard_negative_similarities(cache.embeddings, p.blocks.front());
        benchmark::DoNotOptimize(set.entries.data());
    }
}
BENCHMARK(HardMining)->Arg(16)->Arg(32)->Arg(64);
