#include <benchmark/benchmark.h>

#include "slt/decoder.hpp"

using namespace slt;

namespace {

Tensor random_frames(std::size_t t, std::size_t dim, std::uint64_t seed) {
    Rng rng(seed);
    Tensor f({t, dim});
    for (std::size_t i = 0; i < f.numel(); ++i) f[i] = rng.gaussian();
    return f;
}

DecoderConfig bench_decoder_config() {
    DecoderConfig cfg;
    cfg.vocab = 64;
    cfg.d_model = 64;
    cfg.layers = 2;
    cfg.heads = 4;
    cfg.ffn = 128;
    cfg.lora_rank = 4;
    cfg.lora_alpha = 4.0;
    return cfg;
}

EncoderConfig bench_encoder_config() {
    EncoderConfig cfg;
    cfg.layers = 2;
    cfg.hidden = 64;
    cfg.heads = 4;
    cfg.ffn = 128;
    cfg.window = 7;
    cfg.downsample_after = 1;
    return cfg;
}

std::vector<int> ramp_ids(std::size_t len, std::size_t vocab) {
    std::vector<int> ids(len);
    for (std::size_t i = 0; i < len; ++i) ids[i] = static_cast<int>(i % vocab);
    return ids;
}

} // namespace

static void BM_AdaptedForwardLogits(benchmark::State& state) {
    std::size_t len = static_cast<std::size_t>(state.range(0));
    Rng rng(9);
    DecoderConfig cfg = bench_decoder_config();
    FrozenLM lm(cfg, rng);
    lm.freeze();
    lm.adapt(cfg.lora_rank, cfg.lora_alpha, rng);
    Var sign = constant(random_frames(12, cfg.d_model, 10));
    std::vector<int> ids = ramp_ids(len, cfg.vocab);
    for (auto _ : state) {
        Var logits = lm.forward_logits(ids, &sign);
        benchmark::DoNotOptimize(logits->value.data().data());
    }
    state.SetItemsProcessed(state.iterations() * len);
}
BENCHMARK(BM_AdaptedForwardLogits)->Arg(8)->Arg(24)->Arg(48);

static void BM_TranslatorGenerate(benchmark::State& state) {
    std::size_t width = static_cast<std::size_t>(state.range(0));
    Rng rng(11);
    SignTranslator model(bench_encoder_config(), 128, bench_decoder_config(), rng);
    model.lm().freeze();
    model.lm().adapt(4, 4.0, rng);
    Tensor frames = random_frames(24, 128, 12);
    for (auto _ : state) {
        std::vector<int> out = model.generate(frames, 1, 2, width, 16);
        benchmark::DoNotOptimize(out.data());
    }
}
BENCHMARK(BM_TranslatorGenerate)->Arg(1)->Arg(4);
