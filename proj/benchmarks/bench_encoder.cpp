#include <benchmark/benchmark.h>

#include "ddl/encoder.hpp"
#include "ddl/rng.hpp"

using namespace ddl;

namespace {

Matrix random_batch(std::size_t rows, std::size_t cols) {
    Rng rng(7);
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.gaussian();
    return m;
}

} // namespace

static void EncoderForward(benchmark::State& state) {
    const EncoderNet net = EncoderNet::random({48, 64, 32}, 120, 1);
    const Matrix batch = random_batch(static_cast<std::size_t>(state.range(0)), 48);
    for (auto _ : state) {
        ForwardCache cache = encoder_forward(net, batch);
        benchmark::DoNotOptimize(cache.embeddings.data());
    }
}
BENCHMARK(EncoderForward)->Arg(72)->Arg(144)->Arg(216);

static void EncoderForwardBackward(benchmark::State& state) {
    const EncoderNet net = EncoderNet::random({48, 64, 32}, 120, 1);
    const std::size_t rows = static_cast<std::size_t>(state.range(0));
    const Matrix batch = random_batch(rows, 48);
    const Matrix upstream = random_batch(rows, 32);
    for (auto _ : state) {
        const ForwardCache cache = encoder_forward(net, batch);
        ParamGrads grads = encoder_backward(net, cache, upstream);
        benchmark::DoNotOptimize(grads.head.data());
    }
}
BENCHMARK(EncoderForwardBackward)->Arg(72)->Arg(144)->Arg(216);
