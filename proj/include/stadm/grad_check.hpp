#pragma once

#include <functional>

#include "stadm/param_store.hpp"

namespace stadm {

/// Scalar objective over a ParamStore. When with_grads is true the callee
/// must accumulate d(loss)/d(param) into the store's gradient buffers
/// (which arrive zeroed); when false it only needs to return the value.
using ScalarFn = std::function<double(ParamStore&, bool with_grads)>;

/// Compares analytic gradients against central finite differences for every
/// trainable scalar. Returns max over parameters of
/// |analytic - fd| / max(1, |fd|). Throws NumericError on non-finite values.
double grad_check(const ScalarFn& f, ParamStore& params, double h = 1e-5);

}  // namespace stadm
