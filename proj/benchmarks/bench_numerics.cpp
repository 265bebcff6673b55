#include <benchmark/benchmark.h>

#include "slt/autodiff.hpp"

using namespace slt;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t({r, c});
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.gaussian();
    return t;
}

} // namespace

static void BM_MatmulForward(benchmark::State& state) {
    std::size_t n = static_cast<std::size_t>(state.range(0));
    Var a = constant(random_matrix(n, n, 1));
    Var b = constant(random_matrix(n, n, 2));
    for (auto _ : state) {
        Var c = matmul(a, b);
        benchmark::DoNotOptimize(c->value.data().data());
    }
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_MatmulForward)->Arg(32)->Arg(64)->Arg(128)->Arg(256);

static void BM_MatmulBackward(benchmark::State& state) {
    std::size_t n = static_cast<std::size_t>(state.range(0));
    Parameter a(random_matrix(n, n, 1));
    Parameter b(random_matrix(n, n, 2));
    for (auto _ : state) {
        a.zero_grad();
        b.zero_grad();
        Var loss = sum_all(matmul(leaf(a), leaf(b)));
        backward(loss);
        benchmark::DoNotOptimize(a.grad.data().data());
    }
}
BENCHMARK(BM_MatmulBackward)->Arg(32)->Arg(64)->Arg(128);

static void BM_SoftmaxRows(benchmark::State& state) {
    std::size_t n = static_cast<std::size_t>(state.range(0));
    Var x = constant(random_matrix(n, n, 3));
    for (auto _ : state) {
        Var y = softmax(x, Axis::rows);
        benchmark::DoNotOptimize(y->value.data().data());
    }
}
BENCHMARK(BM_SoftmaxRows)->Arg(64)->Arg(256);

static void BM_LayerNormForwardBackward(benchmark::State& state) {
    std::size_t rows = 64, cols = static_cast<std::size_t>(state.range(0));
    Parameter x(random_matrix(rows, cols, 4));
    Parameter gain(Tensor::full({cols}, 1.0));
    Parameter bias(Tensor::zeros({cols}));
    for (auto _ : state) {
        x.zero_grad();
        gain.zero_grad();
        bias.zero_grad();
        Var loss = sum_all(layer_norm(leaf(x), leaf(gain), leaf(bias)));
        backward(loss);
        benchmark::DoNotOptimize(x.grad.data().data());
    }
}
BENCHMARK(BM_LayerNormForwardBackward)->Arg(128)->Arg(512);

BENCHMARK_MAIN();
