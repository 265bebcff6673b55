#include <benchmark/benchmark.h>

#include "slt/encoder.hpp"

using namespace slt;

namespace {

Tensor random_frames(std::size_t t, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    Tensor f({t, dim});
    for (std::size_t i = 0; i < f.numel(); ++i) f[i] = rng.gaussian();
    return f;
}

EncoderConfig bench_encoder_config() {
    EncoderConfig cfg;
    cfg.layers = 2;
    cfg.hidden = 128;
    cfg.heads = 4;
    cfg.ffn = 256;
    cfg.window = 7;
    cfg.downsample_after = 1;
    return cfg;
}

} // namespace

static void BM_EncoderEncode(benchmark::State& state) {
    std::size_t t = static_cast<std::size_t>(state.range(0));
    Rng rng(5);
    SignEncoder encoder(bench_encoder_config(), 128, rng);
    Tensor frames = random_frames(t, 128, 6);
    for (auto _ : state) {
        Tensor out = encoder.encode(frames);
        benchmark::DoNotOptimize(out.data().data());
    }
    state.SetItemsProcessed(state.iterations() * t);
}
BENCHMARK(BM_EncoderEncode)->Arg(16)->Arg(64)->Arg(128);

static void BM_EncoderForwardBackward(benchmark::State& state) {
    std::size_t t = static_cast<std::size_t>(state.range(0));
    Rng rng(7);
    SignEncoder encoder(bench_encoder_config(), 128, rng);
    Parameter frames(random_frames(t, 128, 8));
    for (auto _ : state) {
        for (auto& [name, param] : encoder.named_parameters()) param->zero_grad();
        frames.zero_grad();
        Var loss = sum_all(encoder.forward(leaf(frames)));
        backward(loss);
        benchmark::DoNotOptimize(frames.grad.data().data());
    }
    state.SetItemsProcessed(state.iterations() * t);
}
BENCHMARK(BM_EncoderForwardBackward)->Arg(16)->Arg(64);
