#pragma once

#include <memory>
#include <vector>

#include "slt/module.hpp"

namespace slt {

struct EncoderConfig {
    std::size_t layers = 4;
    std::size_t hidden = 512;
    std::size_t heads = 8;
    std::size_t ffn = 2048;
    std::size_t window = 7;           // odd; attention reaches (window-1)/2 each way
    bool positions = true;            // add sinusoidal positions to the input
    bool downsample = true;
    std::size_t downsample_after = 2; // pooling runs after this many layers
    std::size_t kernel = 3;           // odd pooling kernel
    std::size_t stride = 2;

    void validate() const;
};

// Additive masks: 0 where attention is allowed, -inf elsewhere.
Tensor local_window_mask(std::size_t t, std::size_t window);
Tensor causal_mask(std::size_t t);

// Fixed sine/cosine position table, shape (t x width).
Tensor sinusoidal_positions(std::size_t t, std::size_t width);

// Multi-head scaled-dot attention over already-projected q/k/v, optionally
// masked, optionally scaled per head by `head_gates` (rank-1, length heads).
Var attention_core(const Var& q, const Var& k, const Var& v, std::size_t heads,
                   const Tensor* additive_mask, const Var* head_gates);

// Strided mean pooling over time, expressed as a constant matrix so the
// gradient falls out of matmul. Centers sit at multiples of the stride;
// truncated edge windows renormalize by their actual footprint.
Tensor pooling_matrix(std::size_t t, std::size_t kernel, std::size_t stride);
Var temporal_pool(const Var& x, std::size_t kernel, std::size_t stride);
std::size_t pooled_length(std::size_t t, std::size_t stride);

// Gold-label span index remapping under the same pooling.
std::pair<std::size_t, std::size_t> pool_span(std::size_t start, std::size_t end,
                                              std::size_t stride);

class EncoderLayer : public Module {
public:
    EncoderLayer(const EncoderConfig& cfg, Rng& rng);

    Var forward(const Var& x, const Tensor& mask);

private:
    std::size_t heads_;
    LayerNorm ln1_, ln2_;
    Linear q_, k_, v_, o_, mlp_in_, mlp_out_;
};

// Pre-norm transformer over spatial feature sequences with window-limited
// self-attention and one mid-stack temporal pooling step.
class SignEncoder : public Module {
public:
    SignEncoder(EncoderConfig cfg, std::size_t input_dim, Rng& rng);

    Var forward(const Var& features);        // (T* x input_dim) -> (T x hidden)
    Tensor encode(const Tensor& features);   // value-only path

    const EncoderConfig& config() const { return cfg_; }
    std::size_t input_dim() const { return input_dim_; }
    std::size_t output_length(std::size_t t_star) const;

private:
    EncoderConfig cfg_;
    std::size_t input_dim_ = 0;
    std::unique_ptr<Linear> input_proj_;  // present iff input_dim != hidden
    std::vector<std::unique_ptr<EncoderLayer>> layers_;
    LayerNorm final_ln_;
};

} // namespace slt
