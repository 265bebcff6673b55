#include "slt/tensor.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace slt {

namespace {

std::size_t numel_of(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(numel_of(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != numel_of(shape_)) {
        throw DimensionError("tensor: " + std::to_string(data_.size()) +
                             " values do not fill shape " + slt::shape_string(shape_));
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::row(std::vector<double> values) {
    std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
    require_rank(*this, 2, "rows");
    return shape_[0];
}

std::size_t Tensor::cols() const {
    require_rank(*this, 2, "cols");
    return shape_[1];
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw DimensionError("dim: axis " + std::to_string(axis) + " out of range for " +
                             slt::shape_string(shape_));
    }
    return shape_[axis];
}

double& Tensor::at(std::size_t r, std::size_t c) {
    require_rank(*this, 2, "at");
    return data_[r * shape_[1] + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    require_rank(*this, 2, "at");
    return data_[r * shape_[1] + c];
}

void Tensor::fill(double value) {
    for (double& x : data_) x = value;
}

bool Tensor::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

std::string Tensor::shape_string() const { return slt::shape_string(shape_); }

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream out;
    out << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << "x";
        out << shape[i];
    }
    out << ")";
    return out.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& op) {
    if (!a.same_shape(b)) {
        throw DimensionError(op + ": shape mismatch " + a.shape_string() + " vs " +
                             b.shape_string());
    }
}

void require_rank(const Tensor& t, std::size_t rank, const std::string& op) {
    if (t.ndim() != rank) {
        throw DimensionError(op + ": expected rank " + std::to_string(rank) + ", got " +
                             t.shape_string());
    }
}

namespace {

std::uint64_t mix64(std::uint64_t x) {
    // splitmix64 finalizer; used to decorrelate fork streams.
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

Rng::Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

double Rng::gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

std::size_t Rng::index(std::size_t n) {
    if (n == 0) throw UsageError("Rng::index: empty range");
    // Rejection sampling keeps the draw unbiased for any n.
    std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return static_cast<std::size_t>(x % n);
}

Rng Rng::fork(std::uint64_t stream) const {
    return Rng(mix64(seed_ ^ mix64(stream + 1)));
}

} // namespace slt
