#include "stadm/array.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "stadm/threading.hpp"

namespace stadm {

namespace {
std::size_t product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}
}  // namespace

Array::Array(std::vector<std::size_t> shape) : shape_(std::move(shape)) {
    data_.assign(product(shape_), 0.0);
    cols_ = shape_.size() == 2 ? shape_[1] : 0;
}

Array Array::full(std::vector<std::size_t> shape, double value) {
    Array a(std::move(shape));
    for (auto& v : a.data_) v = value;
    return a;
}

Array Array::from(std::vector<std::size_t> shape, std::vector<double> data) {
    if (product(shape) != data.size())
        throw DimensionError("Array::from: shape does not match data length");
    Array a;
    a.shape_ = std::move(shape);
    a.data_ = std::move(data);
    a.cols_ = a.shape_.size() == 2 ? a.shape_[1] : 0;
    return a;
}

Array Array::randn(std::vector<std::size_t> shape, Rng& rng, double stddev) {
    Array a(std::move(shape));
    for (auto& v : a.data_) v = stddev * rng.normal();
    return a;
}

std::size_t Array::rows() const {
    if (shape_.size() != 2) throw DimensionError("expected rank-2 array, got " + shape_str());
    return shape_[0];
}

std::size_t Array::cols() const {
    if (shape_.size() != 2) throw DimensionError("expected rank-2 array, got " + shape_str());
    return shape_[1];
}

bool Array::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Array::shape_str() const {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
    os << "]";
    return os.str();
}

namespace {

// Four kernels, one per transposition pattern. Each computes full output rows
// [i0, i1); the reduction order over the inner dimension is identical in all
// of them, so partitioning the row range never changes the arithmetic.

void gemm_nn_rows(std::size_t i0, std::size_t i1, std::size_t k, std::size_t n, double alpha,
                  const double* a, const double* b, double* c) {
    for (std::size_t i = i0; i < i1; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = alpha * arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_tn_rows(std::size_t i0, std::size_t i1, std::size_t m, std::size_t k, std::size_t n,
                  double alpha, const double* a, const double* b, double* c) {
    // a is k x m, logical A = a^T.
    for (std::size_t i = i0; i < i1; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = alpha * a[p * m + i];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt_rows(std::size_t i0, std::size_t i1, std::size_t k, std::size_t n, double alpha,
                  const double* a, const double* b, double* c) {
    // b is n x k, logical B = b^T. Dot products, four columns at a time.
    for (std::size_t i = i0; i < i1; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            const double* b0 = b + j * k;
            const double* b1 = b0 + k;
            const double* b2 = b1 + k;
            const double* b3 = b2 + k;
            double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = arow[p];
                s0 += av * b0[p];
                s1 += av * b1[p];
                s2 += av * b2[p];
                s3 += av * b3[p];
            }
            crow[j] += alpha * s0;
            crow[j + 1] += alpha * s1;
            crow[j + 2] += alpha * s2;
            crow[j + 3] += alpha * s3;
        }
        for (; j < n; ++j) {
            const double* brow = b + j * k;
            double s = 0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] += alpha * s;
        }
    }
}

void gemm_tt_rows(std::size_t i0, std::size_t i1, std::size_t m, std::size_t k, std::size_t n,
                  double alpha, const double* a, const double* b, double* c) {
    // a is k x m, b is n x k; C[i,j] = sum_p a[p,i] * b[j,p].
    for (std::size_t i = i0; i < i1; ++i) {
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double s = 0;
            for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * bj[p];
            crow[j] += alpha * s;
        }
    }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t k, std::size_t n, double alpha,
          const double* a, const double* b, double* c, bool accumulate) {
    if (!accumulate) std::memset(c, 0, m * n * sizeof(double));
    const std::size_t work = m * k * n;
    const std::size_t grain = work > 1u << 20 ? 1 : m;  // parallelize only big products
    parallel_for(
        m,
        [&](std::size_t i0, std::size_t i1) {
            if (!trans_a && !trans_b)
                gemm_nn_rows(i0, i1, k, n, alpha, a, b, c);
            else if (trans_a && !trans_b)
                gemm_tn_rows(i0, i1, m, k, n, alpha, a, b, c);
            else if (!trans_a && trans_b)
                gemm_nt_rows(i0, i1, k, n, alpha, a, b, c);
            else
                gemm_tt_rows(i0, i1, m, k, n, alpha, a, b, c);
        },
        grain);
}

}  // namespace stadm
