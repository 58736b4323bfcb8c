#pragma once

#include <vector>

#include "stadm/array.hpp"
#include "stadm/rng.hpp"

namespace stadm::testutil {

inline Array random_array(std::vector<std::size_t> shape, Rng& rng, double stddev = 1.0) {
    return Array::randn(std::move(shape), rng, stddev);
}

inline double max_abs_diff(const Array& a, const Array& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = std::fabs(a[i] - b[i]);
        if (d > m) m = d;
    }
    return m;
}

inline bool bit_identical(const Array& a, const Array& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

}  // namespace stadm::testutil
