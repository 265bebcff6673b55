#include "slt/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>

namespace slt {

namespace {

std::atomic<bool> g_debug_checks{
#ifdef NDEBUG
    false
#else
    true
#endif
};

thread_local std::uint64_t g_next_seq = 1;

Var make_node(Tensor value, std::vector<Var> parents) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->seq = g_next_seq++;
    for (const Var& p : parents) {
        if (p->needs_grad) {
            node->needs_grad = true;
            break;
        }
    }
    node->parents = std::move(parents);
    if (g_debug_checks.load(std::memory_order_relaxed) && !node->value.all_finite()) {
        throw DomainError("op produced a non-finite value");
    }
    return node;
}

// Accumulating matmul kernels. C is assumed preallocated; results are added.
void mm_nn(const double* a, const double* b, double* c,
           std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t t = 0; t < k; ++t) {
            double av = arow[t];
            if (av == 0.0) continue;
            const double* brow = b + t * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C(m x p) += A(m x n) * B(p x n)^T
void mm_nt(const double* a, const double* b, double* c,
           std::size_t m, std::size_t n, std::size_t p) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        for (std::size_t j = 0; j < p; ++j) {
            const double* brow = b + j * n;
            double s = 0.0;
            for (std::size_t t = 0; t < n; ++t) s += arow[t] * brow[t];
            c[i * p + j] += s;
        }
    }
}

// C(k x n) += A(m x k)^T * B(m x n)
void mm_tn(const double* a, const double* b, double* c,
           std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t t = 0; t < m; ++t) {
        const double* arow = a + t * k;
        const double* brow = b + t * n;
        for (std::size_t i = 0; i < k; ++i) {
            double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void softmax_span(const double* x, double* y, std::size_t n, std::size_t stride) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) hi = std::max(hi, x[i * stride]);
    if (hi == -std::numeric_limits<double>::infinity()) {
        throw DomainError("softmax: all positions masked");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double e = std::exp(x[i * stride] - hi);
        y[i * stride] = e;
        total += e;
    }
    for (std::size_t i = 0; i < n; ++i) y[i * stride] /= total;
}

double sigmoid(double x) {
    if (x >= 0.0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

void set_debug_checks(bool enabled) { g_debug_checks.store(enabled); }
bool debug_checks_enabled() { return g_debug_checks.load(); }

Var constant(Tensor value) { return make_node(std::move(value), {}); }

Var constant(double value) { return make_node(Tensor::scalar(value), {}); }

Var leaf(Parameter& p) {
    Var node = make_node(p.value, {});
    node->needs_grad = p.trainable;
    node->origin = &p;
    if (p.trainable) {
        node->backprop = [](Node& self) {
            Tensor& g = self.origin->grad;
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
        };
    }
    return node;
}

void backward(const Var& root) {
    if (!root) throw UsageError("backward: null root");
    if (root->value.numel() != 1) {
        throw UsageError("backward: root must be scalar, got " + root->value.shape_string());
    }
    if (!root->needs_grad) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.get()};
    seen.insert(root.get());
    while (!stack.empty()) {
        Node* node = stack.back();
        stack.pop_back();
        order.push_back(node);
        for (const Var& p : node->parents) {
            if (p->needs_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(),
              [](const Node* a, const Node* b) { return a->seq > b->seq; });

    for (Node* node : order) node->grad = Tensor::zeros(node->value.shape());
    root->grad[0] = 1.0;
    for (Node* node : order) {
        if (node->backprop) node->backprop(*node);
    }
}

// ---- elementwise -------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "add");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
    Var node = make_node(std::move(out), {a, b});
    if (node->needs_grad) {
        node->backprop = [](Node& self) {
            for (int which = 0; which < 2; ++which) {
                Node& p = *self.parents[which];
                if (!p.needs_grad) continue;
                for (std::size_t i = 0; i < p.grad.numel(); ++i) p.grad[i] += self.grad[i];
            }
        };
    }
    return node;
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "sub");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
    Var node = make_node(std::move(out), {a, b});
    if (node->needs_grad) {
        node->backprop = [](Node& self) {
            Node& a = *self.parents[0];
            Node& b = *self.parents[1];
            if (a.needs_grad)
                for (std::size_t i = 0; i < a.grad.numel(); ++i) a.grad[i] += self.grad[i];
            if (b.needs_grad)
                for (std::size_t i = 0; i < b.grad.numel(); ++i) b.grad[i] -= self.grad[i];
        };
    }
    return node;
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "mul");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    Var node = make_node(std::move(out), {a, b});
    if (node->needs_grad) {
        node->backprop = [](Node& self) {
            Node& a = *self.parents[0];
            Node& b = *self.parents[1];
            if (a.needs_grad)
                for (std::size_t i = 0; i < a.grad.numel(); ++i)
                    a.grad[i] += self.grad[i] * b.value[i];
            if (b.needs_grad)
                for (std::size_t i = 0; i < b.grad.numel(); ++i)
                    b.grad[i] += self.grad[i] * a.value[i];
        };
    }
    return node;
}

Var scale(const Var& a, double factor) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= factor;
    Var node = make_node(std::move(out), {a});
    if (node->needs_grad) {
        node->backprop = [factor](Node& self) {
            Node& a = *self.parents[0];
            for (std::size_t i = 0; i < a.grad.numel(); ++i) a.grad[i] += factor * self.grad[i];
        };
    }
    return node;
}

Var add_scalar(const Var& a, double offset) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += offset;
    Var node = make_node(std::move(out), {a});
    if (node->needs_grad) {
        node->backprop = [](Node& self) {
            Node& a = *self.parents[0];
            for (std::size_t i = 0; i < a.grad.numel(); ++i) a.grad[i] += self.grad[i];
        };
    }
    return node;
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale_by(const Var& a, const Var& s) {
    if (s->value.numel() != 1) {
        throw DimensionError("scale_by: scale must be scalar, got " + s->value.shape_string());
    }
    double sv = s->value[0];
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= sv;
    Var node = make_node(std::move(out), {a, s});
    if (node->needs_grad) {
        node->backprop = [sv](Node& self) {
            Node& a = *self.parents[0];
            Node& s = *self.parents[1];
            if (a.needs_grad)
                for (std::size_t i = 0; i < a.grad.numel(); ++i) a.grad[i] += sv * self.grad[i];
            if (s.needs_grad) {
                double acc = 0.0;
                for (std::size_t i = 0; i < a.value.numel(); ++i)
                    acc += self.grad[i] * a.value[i];
                s.grad[0] += acc;
            }
        };
    }
    return node;
}

Var div_by(const Var& a, const Var& s) {
    if (s->value.numel() != 1) {
        throw DimensionError("div_by: divisor must be scalar, got " + s->value.shape_string());
    }
    double sv = s->value[0];
    if (sv == 0.0) throw DomainError("div_by: divisor is zero");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] /= sv;
    Var node = make_node(std::move(out), {a, s});
    if (node->needs_grad) {
        node->backprop = [sv](Node& self) {
            Node& a = *self.parents[0];
            Node& s = *self.parents[1];
            if (a.needs_grad)
                for (std::size_t i = 0; i < a.grad.numel(); ++i) a.grad[i] += self.grad[i] / sv;
            if (s.needs_grad) {
                double acc = 0.0;
                for (std::size_t i = 0; i < a.value.numel(); ++i)
                    acc += self.grad[i] * a.value[i];
                s.grad[0] -= acc / (sv * sv);
            }
        };
    }
    return node;
}

namespace {

void require_rowvec(const Var& m, const Var& v, const std::string& op) {
    require_rank(m->value, 2, op);
    require_rank(v->value, 1, op);
    if (v->value.numel() != m->value.cols()) {
        throw DimensionError(op + ": vector " + v->value.shape_string() +
                             " does not match matrix " + m->value.shape_string());
    }
}

} // namespace

Var add_rowvec(const Var& m, const Var& v) {
    require_rowvec(m, v, "add_rowvec");
    std::size_t r = m->value.rows(), c = m->value.cols();
    Tensor out = m->value;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] += v->value[j];
    Var node = make_node(std::move(out), {m, v});
    if (node->needs_grad) {
        node->backprop = [r, c](Node& self) {
            Node& m = *self.parents[0];
            Node& v = *self.parents[1];
            if (m.needs_grad)
                for (std::size_t i = 0; i < m.grad.numel(); ++i) m.grad[i] += self.grad[i];
            if (v.needs_grad)
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) v.grad[j] += self.grad[i * c + j];
        };
    }
    return node;
}

Var mul_rowvec(const Var& m, const Var& v) {
    require_rowvec(m, v, "mul_rowvec");
    std::size_t r = m->value.rows(), c = m->value.cols();
    Tensor out = m->value;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= v->value[j];
    Var node = make_node(std::move(out), {m, v});
    if (node->needs_grad) {
        node->backprop = [r, c](Node& self) {
            Node& m = *self.parents[0];
            Node& v = *self.parents[1];
            if (m.needs_grad)
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                        m.grad[i * c + j] += self.grad[i * c + j] * v.value[j];
            if (v.needs_grad)
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                        v.grad[j] += self.grad[i * c + j] * m.value[i * c + j];
        };
    }
    return node;
}

Var div_rowvec(const Var& m, const Var& v) {
    require_rowvec(m, v, "div_rowvec");
    std::size_t r = m->value.rows(), c = m->value.cols();
    for (std::size_t j = 0; j < c; ++j) {
        if (v->value[j] == 0.0) throw DomainError("div_rowvec: zero divisor at column " +
                                                  std::to_string(j));
    }
    Tensor out = m->value;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= v->value[j];
    Var node = make_node(std::move(out), {m, v});
    if (node->needs_grad) {
        node->backprop = [r, c](Node& self) {
            Node& m = *self.parents[0];
            Node& v = *self.parents[1];
            if (m.needs_grad)
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                        m.grad[i * c + j] += self.grad[i * c + j] / v.value[j];
            if (v.needs_grad)
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                        v.grad[j] -= self.grad[i * c + j] * m.value[i * c + j] /
                                     (v.value[j] * v.value[j]);
        };
    }
    return node;
}

Var div_colvec(const Var& m, const Var& v) {
    require_rank(m->value, 2, "div_colvec");
    require_rank(v->value, 1, "div_colvec");
    std::size_t r = m->value.rows(), c = m->value.cols();
    if (v->value.numel() != r) {
        throw DimensionError("div_colvec: vector " + v->value.shape_string() +
                             " does not match matrix " + m->value.shape_string());
    }
    for (std::size_t i = 0; i < r; ++i) {
        if (v->value[i] == 0.0) throw DomainError("div_colvec: zero divisor at row " +
                                                  std::to_string(i));
    }
    Tensor out = m->value;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= v->value[i];
    Var node = make_node(std::move(out), {m, v});
    if (node->needs_grad) {
        node->backprop = [r, c](Node& self) {
            Node& m = *self.parents[0];
            Node& v = *self.parents[1];
            if (m.needs_grad)
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                        m.grad[i * c + j] += self.grad[i * c + j] / v.value[i];
            if (v.needs_grad)
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j)
                        v.grad[i] -= self.grad[i * c + j] * m.value[i * c + j] /
                                     (v.value[i] * v.value[i]);
        };
    }
    return node;
}

Var exp_op(const Var& a) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::exp(out[i]);
    Var node = make_node(std::move(out), {a});
    if (node->needs_grad) {
        node->backprop = [](Node& self) {
            Node& a = *self.parents[0];
            for (std::size_t i = 0; i < a.grad.numel(); ++i)
                a.grad[i] += self.grad[i] * self.value[i];
        };
    }
    return node;
}

Var log_op(const Var& a) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) {
        if (out[i] <= 0.0) throw DomainError("log: non-positive input");
        out[i] = std::log(out[i]);
    }
    Var node = make_node(std::move(out), {a});
    if (node->needs_grad) {
        node->backprop = [](Node& self) {
            Node& a = *self.parents[0];
            for (std::size_t i = 0; i < a.grad.numel(); ++i)
                a.grad[i] += self.grad[i] / a.value[i];
        };
    }
    return node;
}

Var square(const Var& a) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= out[i];
    Var node = make_node(std::move(out), {a});
    if (node->needs_grad) {
        node->backprop = [](Node& self) {
            Node& a = *self.parents[0];
            for (std::size_t i = 0; i < a.grad.numel(); ++i)
                a.grad[i] += 2.0 * a.value[i] * self.grad[i];
        };
    }
    return node;
}

Var sqrt_shift(const Var& a, double shift) {
    if (shift <= 0.0) throw DomainError("sqrt_shift: shift must be positive");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) {
        double x = out[i] + shift;
        if (x <= 0.0) throw DomainError("sqrt_shift: non-positive argument");
        out[i] = std::sqrt(x);
    }
    Var node = make_node(std::move(out), {a});
    if (node->needs_grad) {
        node->backprop = [](Node& self) {
            Node& a = *self.parents[0];
            for (std::size_t i = 0; i < a.grad.numel(); ++i)
                a.grad[i] += self.grad[i] / (2.0 * self.value[i]);
        };
    }
    return node;
}

Var gelu(const Var& a) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) {
        double x = out[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
    }
    Var node = make_node(std::move(out), {a});
    if (node->needs_grad) {
        node->backprop = [](Node& self) {
            Node& a = *self.parents[0];
            constexpr double inv_sqrt_2pi = 0.3989422804014327;
            for (std::size_t i = 0; i < a.grad.numel(); ++i) {
                double x = a.value[i];
                double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
                double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
                a.grad[i] += self.grad[i] * (cdf + x * pdf);
            }
        };
    }
    return node;
}

Var softplus(const Var& a) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) {
        double x = out[i];
        if (x > 30.0)
            out[i] = x;
        else if (x < -30.0)
            out[i] = std::exp(x);
        else
            out[i] = std::log1p(std::exp(x));
    }
    Var node = make_node(std::move(out), {a});
    if (node->needs_grad) {
        node->backprop = [](Node& self) {
            Node& a = *self.parents[0];
            for (std::size_t i = 0; i < a.grad.numel(); ++i)
                a.grad[i] += self.grad[i] * sigmoid(a.value[i]);
        };
    }
    return node;
}

namespace {

Var clamp_impl(const Var& a, double lo, double hi, bool inclusive, const char* name) {
    if (!(lo < hi)) throw DomainError(std::string(name) + ": lo must be below hi");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::clamp(out[i], lo, hi);
    Var node = make_node(std::move(out), {a});
    if (node->needs_grad) {
        node->backprop = [lo, hi, inclusive](Node& self) {
            Node& a = *self.parents[0];
            for (std::size_t i = 0; i < a.grad.numel(); ++i) {
                double x = a.value[i];
                bool open = inclusive ? (x >= lo && x <= hi) : (x > lo && x < hi);
                if (open) a.grad[i] += self.grad[i];
            }
        };
    }
    return node;
}

} // namespace

Var clamp(const Var& a, double lo, double hi) {
    return clamp_impl(a, lo, hi, false, "clamp");
}

Var clamp_inclusive(const Var& a, double lo, double hi) {
    return clamp_impl(a, lo, hi, true, "clamp_inclusive");
}

// ---- linear algebra ----------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    require_rank(a->value, 2, "matmul");
    require_rank(b->value, 2, "matmul");
    std::size_t m = a->value.rows(), k = a->value.cols();
    std::size_t k2 = b->value.rows(), n = b->value.cols();
    if (k != k2) {
        throw DimensionError("matmul: inner dimensions disagree, " + a->value.shape_string() +
                             " vs " + b->value.shape_string());
    }
    Tensor out = Tensor::zeros({m, n});
    mm_nn(a->value.data().data(), b->value.data().data(), out.data().data(), m, k, n);
    Var node = make_node(std::move(out), {a, b});
    if (node->needs_grad) {
        node->backprop = [m, k, n](Node& self) {
            Node& a = *self.parents[0];
            Node& b = *self.parents[1];
            if (a.needs_grad)
                mm_nt(self.grad.data().data(), b.value.data().data(), a.grad.data().data(),
                      m, n, k);
            if (b.needs_grad)
                mm_tn(a.value.data().data(), self.grad.data().data(), b.grad.data().data(),
                      m, k, n);
        };
    }
    return node;
}

Var transpose(const Var& a) {
    require_rank(a->value, 2, "transpose");
    std::size_t r = a->value.rows(), c = a->value.cols();
    Tensor out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a->value[i * c + j];
    Var node = make_node(std::move(out), {a});
    if (node->needs_grad) {
        node->backprop = [r, c](Node& self) {
            Node& a = *self.parents[0];
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) a.grad[i * c + j] += self.grad[j * r + i];
        };
    }
    return node;
}

// ---- reductions ----------------------------------------------------------------

Var sum_all(const Var& a) {
    double total = 0.0;
    for (std::size_t i = 0; i < a->value.numel(); ++i) total += a->value[i];
    Var node = make_node(Tensor::scalar(total), {a});
    if (node->needs_grad) {
        node->backprop = [](Node& self) {
            Node& a = *self.parents[0];
            double g = self.grad[0];
            for (std::size_t i = 0; i < a.grad.numel(); ++i) a.grad[i] += g;
        };
    }
    return node;
}

Var mean_all(const Var& a) {
    std::size_t n = a->value.numel();
    if (n == 0) throw DomainError("mean_all: empty tensor");
    return scale(sum_all(a), 1.0 / static_cast<double>(n));
}

Var sum_axis0(const Var& m) {
    require_rank(m->value, 2, "sum_axis0");
    std::size_t r = m->value.rows(), c = m->value.cols();
    Tensor out({c});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j] += m->value[i * c + j];
    Var node = make_node(std::move(out), {m});
    if (node->needs_grad) {
        node->backprop = [r, c](Node& self) {
            Node& m = *self.parents[0];
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) m.grad[i * c + j] += self.grad[j];
        };
    }
    return node;
}

Var sum_axis1(const Var& m) {
    require_rank(m->value, 2, "sum_axis1");
    std::size_t r = m->value.rows(), c = m->value.cols();
    Tensor out({r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i] += m->value[i * c + j];
    Var node = make_node(std::move(out), {m});
    if (node->needs_grad) {
        node->backprop = [r, c](Node& self) {
            Node& m = *self.parents[0];
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) m.grad[i * c + j] += self.grad[i];
        };
    }
    return node;
}

Var mean_rows(const Var& m) {
    require_rank(m->value, 2, "mean_rows");
    std::size_t r = m->value.rows();
    if (r == 0) throw DomainError("mean_rows: no rows");
    return scale(sum_axis0(m), 1.0 / static_cast<double>(r));
}

Var row_l2norm(const Var& m) {
    require_rank(m->value, 2, "row_l2norm");
    std::size_t r = m->value.rows(), c = m->value.cols();
    Tensor out({r});
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            double x = m->value[i * c + j];
            s += x * x;
        }
        out[i] = std::sqrt(s);
    }
    Var node = make_node(std::move(out), {m});
    if (node->needs_grad) {
        node->backprop = [r, c](Node& self) {
            Node& m = *self.parents[0];
            for (std::size_t i = 0; i < r; ++i) {
                double n = self.value[i];
                if (n == 0.0) continue;  // subgradient at the origin
                double g = self.grad[i] / n;
                for (std::size_t j = 0; j < c; ++j) m.grad[i * c + j] += g * m.value[i * c + j];
            }
        };
    }
    return node;
}

Var col_l2norm(const Var& m) {
    require_rank(m->value, 2, "col_l2norm");
    std::size_t r = m->value.rows(), c = m->value.cols();
    Tensor out({c});
    for (std::size_t j = 0; j < c; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < r; ++i) {
            double x = m->value[i * c + j];
            s += x * x;
        }
        out[j] = std::sqrt(s);
    }
    Var node = make_node(std::move(out), {m});
    if (node->needs_grad) {
        node->backprop = [r, c](Node& self) {
            Node& m = *self.parents[0];
            for (std::size_t j = 0; j < c; ++j) {
                double n = self.value[j];
                if (n == 0.0) continue;
                double g = self.grad[j] / n;
                for (std::size_t i = 0; i < r; ++i) m.grad[i * c + j] += g * m.value[i * c + j];
            }
        };
    }
    return node;
}

// ---- softmax family -------------------------------------------------------------

Var softmax(const Var& a, Axis axis) {
    const Tensor& x = a->value;
    if (x.ndim() != 1 && x.ndim() != 2) {
        throw DimensionError("softmax: expected rank 1 or 2, got " + x.shape_string());
    }
    Tensor out = x;
    std::size_t r, c;
    bool over_rows;  // normalize within each row (i.e. across columns)
    if (x.ndim() == 1) {
        r = 1;
        c = x.numel();
        over_rows = true;
    } else {
        r = x.rows();
        c = x.cols();
        over_rows = (axis == Axis::rows);
    }
    if (over_rows) {
        for (std::size_t i = 0; i < r; ++i)
            softmax_span(x.data().data() + i * c, out.data().data() + i * c, c, 1);
    } else {
        for (std::size_t j = 0; j < c; ++j)
            softmax_span(x.data().data() + j, out.data().data() + j, r, c);
    }
    Var node = make_node(std::move(out), {a});
    if (node->needs_grad) {
        node->backprop = [r, c, over_rows](Node& self) {
            Node& a = *self.parents[0];
            auto span_back = [&](std::size_t base, std::size_t n, std::size_t stride) {
                double dot = 0.0;
                for (std::size_t i = 0; i < n; ++i)
                    dot += self.grad[base + i * stride] * self.value[base + i * stride];
                for (std::size_t i = 0; i < n; ++i) {
                    std::size_t k = base + i * stride;
                    a.grad[k] += self.value[k] * (self.grad[k] - dot);
                }
            };
            if (over_rows)
                for (std::size_t i = 0; i < r; ++i) span_back(i * c, c, 1);
            else
                for (std::size_t j = 0; j < c; ++j) span_back(j, r, c);
        };
    }
    return node;
}

Var softmax_temp(const Var& a, Axis axis, double tau) {
    if (!(tau > 0.0)) throw DomainError("softmax_temp: temperature must be positive");
    return softmax(scale(a, 1.0 / tau), axis);
}

Var softmax_temp(const Var& a, Axis axis, const Var& tau) {
    if (tau->value.numel() != 1) {
        throw DimensionError("softmax_temp: temperature must be scalar, got " +
                             tau->value.shape_string());
    }
    if (!(tau->value[0] > 0.0)) throw DomainError("softmax_temp: temperature must be positive");
    return softmax(div_by(a, tau), axis);
}

Var log_softmax_rows(const Var& a) {
    const Tensor& x = a->value;
    if (x.ndim() != 1 && x.ndim() != 2) {
        throw DimensionError("log_softmax_rows: expected rank 1 or 2, got " + x.shape_string());
    }
    std::size_t r = x.ndim() == 1 ? 1 : x.rows();
    std::size_t c = x.ndim() == 1 ? x.numel() : x.cols();
    Tensor out = x;
    for (std::size_t i = 0; i < r; ++i) {
        const double* row = x.data().data() + i * c;
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j) hi = std::max(hi, row[j]);
        if (hi == -std::numeric_limits<double>::infinity()) {
            throw DomainError("log_softmax_rows: all positions masked");
        }
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) total += std::exp(row[j] - hi);
        double lse = hi + std::log(total);
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = row[j] - lse;
    }
    Var node = make_node(std::move(out), {a});
    if (node->needs_grad) {
        node->backprop = [r, c](Node& self) {
            Node& a = *self.parents[0];
            for (std::size_t i = 0; i < r; ++i) {
                double gsum = 0.0;
                for (std::size_t j = 0; j < c; ++j) gsum += self.grad[i * c + j];
                for (std::size_t j = 0; j < c; ++j) {
                    std::size_t k = i * c + j;
                    a.grad[k] += self.grad[k] - std::exp(self.value[k]) * gsum;
                }
            }
        };
    }
    return node;
}

// ---- normalization ----------------------------------------------------------------

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
    const Tensor& xv = x->value;
    if (xv.ndim() != 1 && xv.ndim() != 2) {
        throw DimensionError("layer_norm: expected rank 1 or 2, got " + xv.shape_string());
    }
    std::size_t r = xv.ndim() == 1 ? 1 : xv.rows();
    std::size_t c = xv.ndim() == 1 ? xv.numel() : xv.cols();
    if (c == 0) throw DomainError("layer_norm: zero-length axis");
    require_rank(gain->value, 1, "layer_norm");
    require_rank(bias->value, 1, "layer_norm");
    if (gain->value.numel() != c || bias->value.numel() != c) {
        throw DimensionError("layer_norm: gain/bias length does not match width " +
                             std::to_string(c));
    }

    Tensor out = xv;
    auto xhat = std::make_shared<Tensor>(xv);
    auto inv = std::make_shared<std::vector<double>>(r);
    for (std::size_t i = 0; i < r; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += xv[i * c + j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            double d = xv[i * c + j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(c);
        double s = 1.0 / std::sqrt(var + eps);
        (*inv)[i] = s;
        for (std::size_t j = 0; j < c; ++j) {
            double h = (xv[i * c + j] - mean) * s;
            (*xhat)[i * c + j] = h;
            out[i * c + j] = gain->value[j] * h + bias->value[j];
        }
    }
    Var node = make_node(std::move(out), {x, gain, bias});
    if (node->needs_grad) {
        node->backprop = [r, c, xhat, inv](Node& self) {
            Node& x = *self.parents[0];
            Node& gain = *self.parents[1];
            Node& bias = *self.parents[2];
            for (std::size_t i = 0; i < r; ++i) {
                double m1 = 0.0, m2 = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    std::size_t k = i * c + j;
                    double dh = self.grad[k] * gain.value[j];
                    m1 += dh;
                    m2 += dh * (*xhat)[k];
                }
                m1 /= static_cast<double>(c);
                m2 /= static_cast<double>(c);
                if (x.needs_grad) {
                    for (std::size_t j = 0; j < c; ++j) {
                        std::size_t k = i * c + j;
                        double dh = self.grad[k] * gain.value[j];
                        x.grad[k] += (*inv)[i] * (dh - m1 - (*xhat)[k] * m2);
                    }
                }
                if (gain.needs_grad)
                    for (std::size_t j = 0; j < c; ++j)
                        gain.grad[j] += self.grad[i * c + j] * (*xhat)[i * c + j];
                if (bias.needs_grad)
                    for (std::size_t j = 0; j < c; ++j) bias.grad[j] += self.grad[i * c + j];
            }
        };
    }
    return node;
}

// ---- shape surgery ------------------------------------------------------------------

Var slice_cols(const Var& m, std::size_t start, std::size_t count) {
    require_rank(m->value, 2, "slice_cols");
    std::size_t r = m->value.rows(), c = m->value.cols();
    if (start + count > c) {
        throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                             std::to_string(start + count) + ") exceeds " +
                             m->value.shape_string());
    }
    Tensor out({r, count});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < count; ++j) out[i * count + j] = m->value[i * c + start + j];
    Var node = make_node(std::move(out), {m});
    if (node->needs_grad) {
        node->backprop = [r, c, start, count](Node& self) {
            Node& m = *self.parents[0];
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < count; ++j)
                    m.grad[i * c + start + j] += self.grad[i * count + j];
        };
    }
    return node;
}

Var slice_rows(const Var& m, std::size_t start, std::size_t count) {
    require_rank(m->value, 2, "slice_rows");
    std::size_t r = m->value.rows(), c = m->value.cols();
    if (start + count > r) {
        throw DimensionError("slice_rows: [" + std::to_string(start) + ", " +
                             std::to_string(start + count) + ") exceeds " +
                             m->value.shape_string());
    }
    Tensor out({count, c});
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = m->value[(start + i) * c + j];
    Var node = make_node(std::move(out), {m});
    if (node->needs_grad) {
        node->backprop = [c, start, count](Node& self) {
            Node& m = *self.parents[0];
            for (std::size_t i = 0; i < count; ++i)
                for (std::size_t j = 0; j < c; ++j)
                    m.grad[(start + i) * c + j] += self.grad[i * c + j];
        };
    }
    return node;
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw UsageError("concat_cols: no parts");
    std::size_t r = parts[0]->value.rows();
    std::size_t total = 0;
    for (const Var& p : parts) {
        require_rank(p->value, 2, "concat_cols");
        if (p->value.rows() != r) {
            throw DimensionError("concat_cols: row mismatch " + p->value.shape_string());
        }
        total += p->value.cols();
    }
    Tensor out({r, total});
    std::size_t offset = 0;
    for (const Var& p : parts) {
        std::size_t c = p->value.cols();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[i * total + offset + j] = p->value[i * c + j];
        offset += c;
    }
    Var node = make_node(std::move(out), parts);
    if (node->needs_grad) {
        node->backprop = [r, total](Node& self) {
            std::size_t offset = 0;
            for (const Var& p : self.parents) {
                std::size_t c = p->value.cols();
                if (p->needs_grad)
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j)
                            p->grad[i * c + j] += self.grad[i * total + offset + j];
                offset += c;
            }
        };
    }
    return node;
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw UsageError("concat_rows: no parts");
    std::size_t c = parts[0]->value.cols();
    std::size_t total = 0;
    for (const Var& p : parts) {
        require_rank(p->value, 2, "concat_rows");
        if (p->value.cols() != c) {
            throw DimensionError("concat_rows: column mismatch " + p->value.shape_string());
        }
        total += p->value.rows();
    }
    Tensor out({total, c});
    std::size_t offset = 0;
    for (const Var& p : parts) {
        std::size_t r = p->value.rows();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[(offset + i) * c + j] = p->value[i * c + j];
        offset += r;
    }
    Var node = make_node(std::move(out), parts);
    if (node->needs_grad) {
        node->backprop = [c](Node& self) {
            std::size_t offset = 0;
            for (const Var& p : self.parents) {
                std::size_t r = p->value.rows();
                if (p->needs_grad)
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j)
                            p->grad[i * c + j] += self.grad[(offset + i) * c + j];
                offset += r;
            }
        };
    }
    return node;
}

Var element(const Var& v, std::size_t i) {
    require_rank(v->value, 1, "element");
    if (i >= v->value.numel()) {
        throw DimensionError("element: index " + std::to_string(i) + " out of range for " +
                             v->value.shape_string());
    }
    Var node = make_node(Tensor::scalar(v->value[i]), {v});
    if (node->needs_grad) {
        node->backprop = [i](Node& self) {
            self.parents[0]->grad[i] += self.grad[0];
        };
    }
    return node;
}

Var reshape(const Var& a, std::vector<std::size_t> shape) {
    Tensor out(std::move(shape), a->value.data());
    Var node = make_node(std::move(out), {a});
    if (node->needs_grad) {
        node->backprop = [](Node& self) {
            Node& a = *self.parents[0];
            for (std::size_t i = 0; i < a.grad.numel(); ++i) a.grad[i] += self.grad[i];
        };
    }
    return node;
}

Var embedding_rows(const Var& table, const std::vector<int>& ids) {
    require_rank(table->value, 2, "embedding_rows");
    std::size_t v = table->value.rows(), d = table->value.cols();
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= v) {
            throw VocabularyError("embedding_rows: id " + std::to_string(id) +
                                  " outside table of size " + std::to_string(v));
        }
    }
    Tensor out({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
            out[i * d + j] = table->value[static_cast<std::size_t>(ids[i]) * d + j];
    Var node = make_node(std::move(out), {table});
    if (node->needs_grad) {
        node->backprop = [ids, d](Node& self) {
            Node& table = *self.parents[0];
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (std::size_t j = 0; j < d; ++j)
                    table.grad[static_cast<std::size_t>(ids[i]) * d + j] += self.grad[i * d + j];
        };
    }
    return node;
}

// ---- verification --------------------------------------------------------------------

double grad_check(const std::function<Var()>& fn,
                  const std::vector<Parameter*>& inputs,
                  double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-4)) {
        throw UsageError("grad_check: eps must lie in [1e-7, 1e-4]");
    }
    for (Parameter* p : inputs) {
        if (!p) throw UsageError("grad_check: null input");
        p->zero_grad();
    }
    Var out = fn();
    if (out->value.numel() != 1) {
        throw UsageError("grad_check: fn must return a scalar, got " +
                         out->value.shape_string());
    }
    backward(out);

    std::vector<Tensor> analytic;
    analytic.reserve(inputs.size());
    for (Parameter* p : inputs) analytic.push_back(p->grad);

    double worst = 0.0;
    for (std::size_t pi = 0; pi < inputs.size(); ++pi) {
        Parameter* p = inputs[pi];
        for (std::size_t i = 0; i < p->value.numel(); ++i) {
            double orig = p->value[i];
            p->value[i] = orig + eps;
            double f_plus = fn()->value[0];
            p->value[i] = orig - eps;
            double f_minus = fn()->value[0];
            p->value[i] = orig;
            double numeric = (f_plus - f_minus) / (2.0 * eps);
            double a = analytic[pi][i];
            double rel = std::abs(a - numeric) /
                         std::max({1.0, std::abs(a), std::abs(numeric)});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

} // namespace slt
