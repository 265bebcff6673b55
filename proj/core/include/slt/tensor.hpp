#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "slt/error.hpp"

namespace slt {

// Dense row-major tensor of doubles. Rank 1 and rank 2 cover everything this
// library needs; rank 3+ appears only as raw frame buffers handled elsewhere.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor scalar(double value);
    static Tensor row(std::vector<double> values);               // shape {n}
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    std::size_t rows() const;  // rank-2 only
    std::size_t cols() const;  // rank-2 only
    std::size_t dim(std::size_t axis) const;

    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void fill(double value);
    bool all_finite() const;

    std::string shape_string() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& op);
void require_rank(const Tensor& t, std::size_t rank, const std::string& op);

// Deterministic random source. Wraps a fixed-algorithm 64-bit engine and
// implements its own gaussian transform so that streams are reproducible
// across platforms and standard-library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    double uniform();                          // [0, 1)
    double uniform(double lo, double hi);
    double gaussian();                         // N(0, 1)
    double gaussian(double mean, double stddev);
    std::size_t index(std::size_t n);          // uniform in [0, n)

    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(values[i - 1], values[j]);
        }
    }

    // Derived generator for an independent substream, e.g. one per sample.
    Rng fork(std::uint64_t stream) const;

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace slt
