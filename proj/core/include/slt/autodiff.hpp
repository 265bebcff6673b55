#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "slt/tensor.hpp"

namespace slt {

// A trainable (or frozen) tensor. Gradients accumulate into `grad` during
// backward passes; optimizers read and clear them between steps.
struct Parameter {
    Tensor value;
    Tensor grad;
    bool trainable = true;
    std::string name;

    Parameter() = default;
    explicit Parameter(Tensor v, bool trainable_flag = true)
        : value(std::move(v)), grad(Tensor::zeros(value.shape())), trainable(trainable_flag) {}

    void zero_grad() { grad.fill(0.0); }
};

class Node;
using Var = std::shared_ptr<Node>;

// One vertex of the reverse-mode tape. Nodes are created in evaluation order;
// backward() replays them in reverse creation order, which is a valid
// topological order because an op can only consume already-built nodes.
class Node {
public:
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    Parameter* origin = nullptr;  // set on leaves bound to a Parameter
    std::uint64_t seq = 0;
    std::vector<Var> parents;
    std::function<void(Node&)> backprop;
};

// When enabled, every op validates that its output is finite and throws
// DomainError on NaN/Inf. Defaults to on in debug builds, off in release.
void set_debug_checks(bool enabled);
bool debug_checks_enabled();

// ---- graph entry points ----------------------------------------------------

Var constant(Tensor value);
Var constant(double value);
Var leaf(Parameter& p);  // gradient flows into p.grad when p.trainable

// Seeds root->grad with 1 and accumulates gradients into every reachable
// trainable Parameter. Root must be scalar (numel == 1).
void backward(const Var& root);

// ---- elementwise and arithmetic ---------------------------------------------

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var add_scalar(const Var& a, double offset);
Var neg(const Var& a);

// Scalar-variable scaling; `s` must have numel 1.
Var scale_by(const Var& a, const Var& s);
Var div_by(const Var& a, const Var& s);

// Row-vector broadcasting over a rank-2 matrix (vector length == cols).
Var add_rowvec(const Var& m, const Var& v);
Var mul_rowvec(const Var& m, const Var& v);
Var div_rowvec(const Var& m, const Var& v);
// Column-vector broadcasting (vector length == rows).
Var div_colvec(const Var& m, const Var& v);

Var exp_op(const Var& a);
Var log_op(const Var& a);        // domain: strictly positive input
Var square(const Var& a);
Var sqrt_shift(const Var& a, double shift);  // sqrt(x + shift), shift > 0
Var gelu(const Var& a);          // exact erf form
Var softplus(const Var& a);
Var clamp(const Var& a, double lo, double hi);          // gradient on (lo, hi)
Var clamp_inclusive(const Var& a, double lo, double hi); // gradient on [lo, hi]

// ---- linear algebra ---------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

// ---- reductions -------------------------------------------------------------

Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var sum_axis0(const Var& m);   // (r x c) -> (c)
Var sum_axis1(const Var& m);   // (r x c) -> (r)
Var mean_rows(const Var& m);   // column means, (r x c) -> (c)
Var row_l2norm(const Var& m);  // (r x c) -> (r); safe (zero) gradient at 0
Var col_l2norm(const Var& m);  // (r x c) -> (c)

// ---- softmax family ----------------------------------------------------------

enum class Axis { rows, cols };

// Stable softmax along the chosen axis. Rank-1 input is treated as one row.
// Entries of -inf are honoured as hard mask positions.
Var softmax(const Var& a, Axis axis);
Var softmax_temp(const Var& a, Axis axis, double tau);       // tau > 0
Var softmax_temp(const Var& a, Axis axis, const Var& tau);   // scalar Var, > 0
Var log_softmax_rows(const Var& a);

// ---- normalization -----------------------------------------------------------

// Normalizes each row of `x` to zero mean / unit variance, then applies an
// affine gain and bias (both length == cols). eps stabilizes the variance.
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);

// ---- shape surgery -----------------------------------------------------------

Var slice_cols(const Var& m, std::size_t start, std::size_t count);
Var slice_rows(const Var& m, std::size_t start, std::size_t count);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var element(const Var& v, std::size_t i);  // rank-1 -> scalar
Var reshape(const Var& a, std::vector<std::size_t> shape);

// Gathers rows of a (V x d) table; backward scatter-adds into the table.
Var embedding_rows(const Var& table, const std::vector<int>& ids);

// ---- verification -------------------------------------------------------------

// Central-difference check of d(fn)/d(inputs). `fn` must rebuild the graph on
// each call and return a scalar. Returns the max relative error
// |analytic - numeric| / max(1, |analytic|, |numeric|) over all elements.
double grad_check(const std::function<Var()>& fn,
                  const std::vector<Parameter*>& inputs,
                  double eps = 1e-6);

} // namespace slt
