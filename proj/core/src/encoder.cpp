#include "slt/encoder.hpp"

#include <cmath>
#include <limits>

namespace slt {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void EncoderConfig::validate() const {
    if (layers == 0) throw ConfigError("encoder: needs at least one layer");
    if (hidden == 0 || heads == 0 || ffn == 0) throw ConfigError("encoder: zero-sized dimension");
    if (hidden % heads != 0) {
        throw ConfigError("encoder: hidden " + std::to_string(hidden) +
                          " not divisible by heads " + std::to_string(heads));
    }
    if (window % 2 == 0) {
        throw ConfigError("encoder: window must be odd, got " + std::to_string(window));
    }
    if (kernel % 2 == 0) {
        throw ConfigError("encoder: pooling kernel must be odd, got " + std::to_string(kernel));
    }
    if (stride == 0) throw ConfigError("encoder: stride must be positive");
    if (downsample && (downsample_after == 0 || downsample_after > layers)) {
        throw ConfigError("encoder: downsample_after must fall inside the stack");
    }
}

Tensor local_window_mask(std::size_t t, std::size_t window) {
    if (window % 2 == 0) throw ConfigError("local_window_mask: window must be odd");
    std::size_t reach = (window - 1) / 2;
    Tensor mask({t, t});
    for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j < t; ++j) {
            std::size_t gap = i > j ? i - j : j - i;
            mask[i * t + j] = gap <= reach ? 0.0 : kNegInf;
        }
    }
    return mask;
}

Tensor causal_mask(std::size_t t) {
    Tensor mask({t, t});
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < t; ++j) mask[i * t + j] = j <= i ? 0.0 : kNegInf;
    return mask;
}

Tensor sinusoidal_positions(std::size_t t, std::size_t width) {
    if (width == 0) throw ConfigError("sinusoidal_positions: zero width");
    Tensor pe({t, width});
    for (std::size_t pos = 0; pos < t; ++pos) {
        for (std::size_t i = 0; i < width; i += 2) {
            double rate = std::pow(10000.0, static_cast<double>(i) / static_cast<double>(width));
            double angle = static_cast<double>(pos) / rate;
            pe[pos * width + i] = std::sin(angle);
            if (i + 1 < width) pe[pos * width + i + 1] = std::cos(angle);
        }
    }
    return pe;
}

Var attention_core(const Var& q, const Var& k, const Var& v, std::size_t heads,
                   const Tensor* additive_mask, const Var* head_gates) {
    require_rank(q->value, 2, "attention_core");
    require_rank(k->value, 2, "attention_core");
    require_rank(v->value, 2, "attention_core");
    std::size_t d = q->value.cols();
    if (k->value.cols() != d || v->value.cols() != d) {
        throw DimensionError("attention_core: projection widths disagree");
    }
    if (k->value.rows() != v->value.rows()) {
        throw DimensionError("attention_core: key/value lengths disagree");
    }
    if (heads == 0 || d % heads != 0) {
        throw ConfigError("attention_core: width " + std::to_string(d) +
                          " not divisible by " + std::to_string(heads) + " heads");
    }
    if (additive_mask &&
        (additive_mask->rows() != q->value.rows() || additive_mask->cols() != k->value.rows())) {
        throw DimensionError("attention_core: mask " + additive_mask->shape_string() +
                             " does not match attention shape");
    }
    if (head_gates && (*head_gates)->value.numel() != heads) {
        throw ConfigError("attention_core: gate count " +
                          std::to_string((*head_gates)->value.numel()) +
                          " does not match " + std::to_string(heads) + " heads");
    }

    std::size_t dh = d / heads;
    double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> outputs;
    outputs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Var qh = slice_cols(q, h * dh, dh);
        Var kh = slice_cols(k, h * dh, dh);
        Var vh = slice_cols(v, h * dh, dh);
        Var logits = scale(matmul(qh, transpose(kh)), scale_factor);
        if (additive_mask) logits = add(logits, constant(*additive_mask));
        Var attn = softmax(logits, Axis::rows);
        if (head_gates) attn = scale_by(attn, element(*head_gates, h));
        outputs.push_back(matmul(attn, vh));
    }
    return outputs.size() == 1 ? outputs[0] : concat_cols(outputs);
}

Tensor pooling_matrix(std::size_t t, std::size_t kernel, std::size_t stride) {
    if (t == 0) throw DimensionError("pooling_matrix: empty sequence");
    if (kernel % 2 == 0) throw ConfigError("pooling_matrix: kernel must be odd");
    if (stride == 0) throw ConfigError("pooling_matrix: stride must be positive");
    std::size_t out = pooled_length(t, stride);
    std::size_t reach = (kernel - 1) / 2;
    Tensor m({out, t});
    for (std::size_t i = 0; i < out; ++i) {
        std::size_t center = i * stride;
        std::size_t lo = center >= reach ? center - reach : 0;
        std::size_t hi = std::min(center + reach, t - 1);
        double weight = 1.0 / static_cast<double>(hi - lo + 1);
        for (std::size_t j = lo; j <= hi; ++j) m[i * t + j] = weight;
    }
    return m;
}

Var temporal_pool(const Var& x, std::size_t kernel, std::size_t stride) {
    require_rank(x->value, 2, "temporal_pool");
    return matmul(constant(pooling_matrix(x->value.rows(), kernel, stride)), x);
}

std::size_t pooled_length(std::size_t t, std::size_t stride) {
    if (stride == 0) throw ConfigError("pooled_length: stride must be positive");
    return (t + stride - 1) / stride;
}

std::pair<std::size_t, std::size_t> pool_span(std::size_t start, std::size_t end,
                                              std::size_t stride) {
    if (end < start) throw DimensionError("pool_span: end before start");
    return {start / stride, end / stride};
}

EncoderLayer::EncoderLayer(const EncoderConfig& cfg, Rng& rng)
    : heads_(cfg.heads),
      ln1_(cfg.hidden),
      ln2_(cfg.hidden),
      q_(cfg.hidden, cfg.hidden, true, rng),
      k_(cfg.hidden, cfg.hidden, true, rng),
      v_(cfg.hidden, cfg.hidden, true, rng),
      o_(cfg.hidden, cfg.hidden, true, rng),
      mlp_in_(cfg.hidden, cfg.ffn, true, rng),
      mlp_out_(cfg.ffn, cfg.hidden, true, rng) {
    register_module("ln1", ln1_);
    register_module("ln2", ln2_);
    register_module("q", q_);
    register_module("k", k_);
    register_module("v", v_);
    register_module("o", o_);
    register_module("mlp_in", mlp_in_);
    register_module("mlp_out", mlp_out_);
}

Var EncoderLayer::forward(const Var& x, const Tensor& mask) {
    Var n1 = ln1_.forward(x);
    Var attn = o_.forward(
        attention_core(q_.forward(n1), k_.forward(n1), v_.forward(n1), heads_, &mask, nullptr));
    Var h = add(x, attn);
    Var n2 = ln2_.forward(h);
    return add(h, mlp_out_.forward(gelu(mlp_in_.forward(n2))));
}

SignEncoder::SignEncoder(EncoderConfig cfg, std::size_t input_dim, Rng& rng)
    : cfg_(cfg), input_dim_(input_dim), final_ln_(cfg.hidden) {
    cfg_.validate();
    if (input_dim == 0) throw ConfigError("encoder: zero input width");
    if (input_dim != cfg_.hidden) {
        input_proj_ = std::make_unique<Linear>(input_dim, cfg_.hidden, true, rng);
        register_module("input_proj", *input_proj_);
    }
    for (std::size_t i = 0; i < cfg_.layers; ++i) {
        layers_.push_back(std::make_unique<EncoderLayer>(cfg_, rng));
        register_module("layers." + std::to_string(i), *layers_.back());
    }
    register_module("final_ln", final_ln_);
}

Var SignEncoder::forward(const Var& features) {
    require_rank(features->value, 2, "SignEncoder::forward");
    if (features->value.cols() != input_dim_) {
        throw DimensionError("encoder: features " + features->value.shape_string() +
                             " do not match input width " + std::to_string(input_dim_));
    }
    if (features->value.rows() == 0) throw DimensionError("encoder: empty sequence");

    Var x = input_proj_ ? input_proj_->forward(features) : features;
    if (cfg_.positions) {
        x = add(x, constant(sinusoidal_positions(x->value.rows(), cfg_.hidden)));
    }
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        Tensor mask = local_window_mask(x->value.rows(), cfg_.window);
        x = layers_[i]->forward(x, mask);
        if (cfg_.downsample && i + 1 == cfg_.downsample_after) {
            x = temporal_pool(x, cfg_.kernel, cfg_.stride);
        }
    }
    return final_ln_.forward(x);
}

Tensor SignEncoder::encode(const Tensor& features) {
    return forward(constant(features))->value;
}

std::size_t SignEncoder::output_length(std::size_t t_star) const {
    return cfg_.downsample ? pooled_length(t_star, cfg_.stride) : t_star;
}

} // namespace slt
