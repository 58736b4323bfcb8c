#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "stadm/errors.hpp"
#include "stadm/rng.hpp"

namespace stadm {

/// Dense row-major array of 64-bit floats. Plain value type: copyable,
/// movable, no views. Rank is arbitrary but almost everything in the model
/// is rank 1 or 2; conv kernels are rank 3 (filters x channels x width).
class Array {
public:
    Array() = default;
    explicit Array(std::vector<std::size_t> shape);

    static Array zeros(std::vector<std::size_t> shape) { return Array(std::move(shape)); }
    static Array full(std::vector<std::size_t> shape, double value);
    static Array from(std::vector<std::size_t> shape, std::vector<double> data);
    static Array randn(std::vector<std::size_t> shape, Rng& rng, double stddev = 1.0);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    /// Rank-2 accessors; throw DimensionError on other ranks.
    std::size_t rows() const;
    std::size_t cols() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    bool same_shape(const Array& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    std::string shape_str() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
    std::size_t cols_ = 0;  // cached for rank-2 indexing
};

/// C = alpha * op(A) * op(B) + (accumulate ? C : 0).
/// A is m x k after transposition, B is k x n, C is m x n. Row-partitioned
/// internally, so results are bit-identical for any worker count.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t k, std::size_t n, double alpha,
          const double* a, const double* b, double* c, bool accumulate);

}  // namespace stadm
