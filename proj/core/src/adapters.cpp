#include "slt/adapters.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

namespace slt {

LoraDelta::LoraDelta(std::size_t in, std::size_t out, int rank, double alpha, Rng& rng)
    : in_(in), out_(out), rank_(rank), alpha_(alpha) {
    if (rank <= 0) throw ConfigError("LoraDelta: rank must be positive");
    if (static_cast<std::size_t>(rank) > std::min(in, out)) {
        throw ConfigError("LoraDelta: rank " + std::to_string(rank) + " exceeds min(" +
                          std::to_string(in) + ", " + std::to_string(out) + ")");
    }
    if (alpha <= 0.0) throw ConfigError("LoraDelta: alpha must be positive");
    Tensor a({static_cast<std::size_t>(rank), in});
    for (std::size_t i = 0; i < a.numel(); ++i) a[i] = rng.gaussian(0.0, 0.02);
    down_ = Parameter(std::move(a));
    up_ = Parameter(Tensor::zeros({out, static_cast<std::size_t>(rank)}));
    register_parameter("down", down_);
    register_parameter("up", up_);
}

Var LoraDelta::apply(const Var& x) {
    require_rank(x->value, 2, "LoraDelta::apply");
    if (x->value.cols() != in_) {
        throw DimensionError("LoraDelta: input " + x->value.shape_string() +
                             " does not match " + std::to_string(in_) + " features");
    }
    Var h = matmul(x, transpose(leaf(down_)));
    Var out = matmul(h, transpose(leaf(up_)));
    return scale(out, alpha_ / static_cast<double>(rank_));
}

LoraLinear::LoraLinear(std::size_t in, std::size_t out, bool with_bias, Rng& rng,
                       double init_std)
    : base_(in, out, with_bias, rng, init_std) {
    register_module("base", base_);
    base_.set_trainable(false);
}

Var LoraLinear::forward(const Var& x) {
    Var out = base_.forward(x);
    if (delta_) out = add(out, delta_->apply(x));
    return out;
}

Var LoraLinear::base_forward(const Var& x) { return base_.forward(x); }

void LoraLinear::add_adapter(int rank, double alpha, Rng& rng) {
    if (delta_) throw ConfigError("LoraLinear: adapter already attached");
    delta_ = std::make_unique<LoraDelta>(in_features(), out_features(), rank, alpha, rng);
    register_module("delta", *delta_);
}

LoraDelta& LoraLinear::delta() {
    if (!delta_) throw UsageError("LoraLinear: no adapter attached");
    return *delta_;
}

namespace {

void inject_into(Module& node, const std::vector<std::string>& targets, int rank, double alpha,
                 Rng& rng, std::vector<std::size_t>& hits) {
    for (const auto& [name, child] : node.children()) {
        auto it = std::find(targets.begin(), targets.end(), name);
        if (it != targets.end()) {
            if (auto* lin = dynamic_cast<LoraLinear*>(child)) {
                lin->add_adapter(rank, alpha, rng);
                ++hits[static_cast<std::size_t>(it - targets.begin())];
            }
        }
        inject_into(*child, targets, rank, alpha, rng, hits);
    }
}

} // namespace

std::size_t inject_adapters(Module& root, const std::vector<std::string>& targets,
                            int rank, double alpha, Rng& rng) {
    if (targets.empty()) throw ConfigError("inject_adapters: no targets given");
    std::vector<std::size_t> hits(targets.size(), 0);
    inject_into(root, targets, rank, alpha, rng, hits);
    std::size_t total = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (hits[i] == 0) {
            throw ConfigError("inject_adapters: target '" + targets[i] +
                              "' matched no adapter-capable layer");
        }
        total += hits[i];
    }
    return total;
}

namespace {

ParamCount count_subtree(const Module& m) {
    ParamCount c;
    for (const auto& [name, p] : m.named_parameters()) {
        c.total += p->value.numel();
        if (p->trainable) c.trainable += p->value.numel();
    }
    return c;
}

} // namespace

ParamReport count_parameters(const Module& root) {
    ParamReport report;
    ParamCount direct;
    for (const auto& [name, p] : root.local_parameters()) {
        direct.total += p->value.numel();
        if (p->trainable) direct.trainable += p->value.numel();
    }
    if (direct.total > 0) report.components.emplace_back(".", direct);
    for (const auto& [name, child] : root.children()) {
        report.components.emplace_back(name, count_subtree(*child));
    }
    for (const auto& [name, c] : report.components) {
        report.overall.total += c.total;
        report.overall.trainable += c.trainable;
    }
    return report;
}

std::string format_param_report(const ParamReport& report) {
    std::size_t width = 9;
    for (const auto& [name, c] : report.components) width = std::max(width, name.size());
    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(width) + 2) << "component"
        << std::right << std::setw(12) << "params" << std::setw(12) << "trainable" << "\n";
    auto line = [&](const std::string& name, const ParamCount& c) {
        out << std::left << std::setw(static_cast<int>(width) + 2) << name
            << std::right << std::setw(12) << c.total << std::setw(12) << c.trainable << "\n";
    };
    for (const auto& [name, c] : report.components) line(name, c);
    line("total", report.overall);
    return out.str();
}

} // namespace slt
