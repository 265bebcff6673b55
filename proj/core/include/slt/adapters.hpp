#pragma once

#include <memory>
#include <string>
#include <vector>

#include "slt/module.hpp"

namespace slt {

// Low-rank residual delta: x -> (alpha / rank) * (x A^T) B^T.
// A is gaussian-initialized, B starts at zero, so a fresh delta is exactly
// the zero map and attaching one cannot change model outputs.
class LoraDelta : public Module {
public:
    LoraDelta(std::size_t in, std::size_t out, int rank, double alpha, Rng& rng);

    Var apply(const Var& x);

    int rank() const { return rank_; }
    double alpha() const { return alpha_; }
    Parameter& down() { return down_; }  // A, (rank x in)
    Parameter& up() { return up_; }      // B, (out x rank)

private:
    std::size_t in_ = 0, out_ = 0;
    int rank_ = 0;
    double alpha_ = 0.0;
    Parameter down_;
    Parameter up_;
};

// A Linear whose base weights are frozen, with an optional trainable low-rank
// delta on top. Until add_adapter() is called, forward == base_forward.
class LoraLinear : public Module {
public:
    LoraLinear(std::size_t in, std::size_t out, bool with_bias, Rng& rng,
               double init_std = -1.0);

    Var forward(const Var& x);       // frozen base plus delta when adapted
    Var base_forward(const Var& x);  // frozen base only

    void add_adapter(int rank, double alpha, Rng& rng);
    bool adapted() const { return delta_ != nullptr; }
    LoraDelta& delta();

    std::size_t in_features() const { return base_.in_features(); }
    std::size_t out_features() const { return base_.out_features(); }
    Linear& base() { return base_; }

private:
    Linear base_;
    std::unique_ptr<LoraDelta> delta_;
};

// Walks the module tree and attaches adapters to every LoraLinear whose local
// registration name appears in `targets`. Returns the number of layers
// adapted; a target matching nothing is a configuration error.
std::size_t inject_adapters(Module& root, const std::vector<std::string>& targets,
                            int rank, double alpha, Rng& rng);

struct ParamCount {
    std::size_t total = 0;
    std::size_t trainable = 0;
};

struct ParamReport {
    std::vector<std::pair<std::string, ParamCount>> components;  // by top-level child
    ParamCount overall;
};

// Groups counts by the root's immediate children (parameters registered
// directly on the root fall under "."). Mirrors a model card's
// component/params/trainable table.
ParamReport count_parameters(const Module& root);

std::string format_param_report(const ParamReport& report);

} // namespace slt
