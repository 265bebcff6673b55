#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "slt/autodiff.hpp"

namespace slt {

// Base class for anything that owns Parameters. Children and parameters are
// registered by local name; named_parameters() yields dot-joined paths like
// "encoder.layers.0.attn_q.weight" which double as checkpoint keys.
class Module {
public:
    Module() = default;
    Module(const Module&) = delete;
    Module& operator=(const Module&) = delete;
    virtual ~Module() = default;

    std::vector<std::pair<std::string, Parameter*>> named_parameters() const;
    std::vector<Parameter*> parameters() const;

    void zero_grads();
    void set_trainable(bool trainable);

    // Stamps each Parameter's `name` with its dot path. Call once on the root
    // after construction; optimizers and checkpoints rely on these names.
    void finalize_names(const std::string& prefix = "");

    const std::vector<std::pair<std::string, Module*>>& children() const { return children_; }
    const std::vector<std::pair<std::string, Parameter*>>& local_parameters() const {
        return params_;
    }

protected:
    void register_parameter(const std::string& name, Parameter& p);
    void register_module(const std::string& name, Module& m);

private:
    void collect(const std::string& prefix,
                 std::vector<std::pair<std::string, Parameter*>>& out) const;

    std::vector<std::pair<std::string, Parameter*>> params_;
    std::vector<std::pair<std::string, Module*>> children_;
};

// FNV-1a over the byte images of all frozen parameter values. Stable across
// runs; changes iff any frozen value changes bit-for-bit.
std::uint64_t frozen_checksum(const Module& m);

// Affine map y = x W^T + b with x of shape (n x in).
class Linear : public Module {
public:
    Linear(std::size_t in, std::size_t out, bool with_bias, Rng& rng, double init_std = -1.0);

    Var forward(const Var& x);

    std::size_t in_features() const { return in_; }
    std::size_t out_features() const { return out_; }
    bool has_bias() const { return with_bias_; }
    Parameter& weight() { return weight_; }
    const Parameter& weight() const { return weight_; }
    Parameter& bias();

private:
    std::size_t in_ = 0, out_ = 0;
    bool with_bias_ = true;
    Parameter weight_;  // (out x in)
    Parameter bias_;    // (out)
};

class LayerNorm : public Module {
public:
    explicit LayerNorm(std::size_t width, double eps = 1e-5);

    Var forward(const Var& x);

    std::size_t width() const { return width_; }
    Parameter& gain() { return gain_; }
    Parameter& bias() { return bias_; }

private:
    std::size_t width_ = 0;
    double eps_ = 1e-5;
    Parameter gain_;
    Parameter bias_;
};

} // namespace slt
