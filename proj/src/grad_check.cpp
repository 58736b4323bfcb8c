#include "stadm/grad_check.hpp"

#include <cmath>

namespace stadm {

double grad_check(const ScalarFn& f, ParamStore& params, double h) {
    params.zero_grads();
    const double base = f(params, true);
    if (!std::isfinite(base)) throw NumericError("grad_check: non-finite objective");

    double worst = 0.0;
    for (auto& [path, entry] : params) {
        if (!entry.trainable) continue;
        for (std::size_t i = 0; i < entry.value.numel(); ++i) {
            const double saved = entry.value[i];
            entry.value[i] = saved + h;
            const double up = f(params, false);
            entry.value[i] = saved - h;
            const double down = f(params, false);
            entry.value[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down))
                throw NumericError("grad_check: non-finite objective at " + path);
            const double fd = (up - down) / (2.0 * h);
            const double analytic = entry.grad[i];
            const double rel = std::fabs(analytic - fd) / std::max(1.0, std::fabs(fd));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace stadm
