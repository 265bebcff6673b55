#include "slt/module.hpp"

#include <cmath>
#include <cstring>

namespace slt {

void Module::register_parameter(const std::string& name, Parameter& p) {
    for (const auto& [existing, _] : params_) {
        if (existing == name) throw UsageError("duplicate parameter name: " + name);
    }
    params_.emplace_back(name, &p);
}

void Module::register_module(const std::string& name, Module& m) {
    for (const auto& [existing, _] : children_) {
        if (existing == name) throw UsageError("duplicate module name: " + name);
    }
    children_.emplace_back(name, &m);
}

void Module::collect(const std::string& prefix,
                     std::vector<std::pair<std::string, Parameter*>>& out) const {
    for (const auto& [name, p] : params_) {
        out.emplace_back(prefix.empty() ? name : prefix + "." + name, p);
    }
    for (const auto& [name, child] : children_) {
        child->collect(prefix.empty() ? name : prefix + "." + name, out);
    }
}

std::vector<std::pair<std::string, Parameter*>> Module::named_parameters() const {
    std::vector<std::pair<std::string, Parameter*>> out;
    collect("", out);
    return out;
}

std::vector<Parameter*> Module::parameters() const {
    std::vector<Parameter*> out;
    for (auto& [name, p] : named_parameters()) out.push_back(p);
    return out;
}

void Module::zero_grads() {
    for (Parameter* p : parameters()) p->zero_grad();
}

void Module::set_trainable(bool trainable) {
    for (Parameter* p : parameters()) p->trainable = trainable;
}

void Module::finalize_names(const std::string& prefix) {
    for (auto& [name, p] : named_parameters()) {
        p->name = prefix.empty() ? name : prefix + "." + name;
    }
}

std::uint64_t frozen_checksum(const Module& m) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    auto feed = [&hash](const void* bytes, std::size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(bytes);
        for (std::size_t i = 0; i < n; ++i) {
            hash ^= b[i];
            hash *= 0x100000001b3ULL;
        }
    };
    for (const auto& [name, p] : m.named_parameters()) {
        if (p->trainable) continue;
        feed(name.data(), name.size());
        feed(p->value.data().data(), p->value.numel() * sizeof(double));
    }
    return hash;
}

Linear::Linear(std::size_t in, std::size_t out, bool with_bias, Rng& rng, double init_std)
    : in_(in), out_(out), with_bias_(with_bias) {
    if (in == 0 || out == 0) throw ConfigError("Linear: zero-sized dimension");
    double stddev = init_std > 0.0 ? init_std : 1.0 / std::sqrt(static_cast<double>(in));
    Tensor w({out, in});
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.gaussian(0.0, stddev);
    weight_ = Parameter(std::move(w));
    register_parameter("weight", weight_);
    if (with_bias_) {
        bias_ = Parameter(Tensor::zeros({out}));
        register_parameter("bias", bias_);
    }
}

Var Linear::forward(const Var& x) {
    require_rank(x->value, 2, "Linear::forward");
    if (x->value.cols() != in_) {
        throw DimensionError("Linear: input " + x->value.shape_string() + " does not match " +
                             std::to_string(in_) + " features");
    }
    Var out = matmul(x, transpose(leaf(weight_)));
    if (with_bias_) out = add_rowvec(out, leaf(bias_));
    return out;
}

Parameter& Linear::bias() {
    if (!with_bias_) throw UsageError("Linear: no bias");
    return bias_;
}

LayerNorm::LayerNorm(std::size_t width, double eps) : width_(width), eps_(eps) {
    if (width == 0) throw ConfigError("LayerNorm: zero width");
    gain_ = Parameter(Tensor::full({width}, 1.0));
    bias_ = Parameter(Tensor::zeros({width}));
    register_parameter("gain", gain_);
    register_parameter("bias", bias_);
}

Var LayerNorm::forward(const Var& x) {
    return layer_norm(x, leaf(gain_), leaf(bias_), eps_);
}

} // namespace slt
