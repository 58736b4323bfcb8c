#include "stadm/schedule.hpp"

#include <cmath>

#include "stadm/errors.hpp"

namespace stadm {

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "linear") return ScheduleKind::linear;
    if (s == "cosine") return ScheduleKind::cosine;
    throw ConfigError("unknown schedule kind: " + s);
}

std::string to_string(ScheduleKind kind) {
    return kind == ScheduleKind::linear ? "linear" : "cosine";
}

SampleMode sample_mode_from_string(const std::string& s) {
    if (s == "standard") return SampleMode::standard;
    if (s == "paper_literal") return SampleMode::paper_literal;
    throw ConfigError("unknown sample mode: " + s);
}

std::string to_string(SampleMode mode) {
    return mode == SampleMode::standard ? "standard" : "paper_literal";
}

NoiseSchedule build_schedule(ScheduleKind kind, int steps) {
    if (steps < 1) throw ConfigError("build_schedule: steps must be >= 1");
    const std::size_t n = static_cast<std::size_t>(steps);
    NoiseSchedule s;
    s.kind = kind;
    s.steps = steps;
    s.beta.resize(n);

    if (kind == ScheduleKind::linear) {
        const double lo = 1e-4, hi = 0.02;
        if (steps == 1) {
            s.beta[0] = lo;
        } else {
            const double step = (hi - lo) / static_cast<double>(steps - 1);
            for (std::size_t i = 0; i < n; ++i) s.beta[i] = lo + step * static_cast<double>(i);
        }
    } else {
        constexpr double kOffset = 0.008;
        constexpr double kHalfPi = 1.57079632679489661923;
        auto profile = [steps](double t) {
            const double u = (t / static_cast<double>(steps) + kOffset) / (1.0 + kOffset);
            const double c = std::cos(u * kHalfPi);
            return c * c;
        };
        const double base = profile(0.0);
        double prev = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double cur = profile(static_cast<double>(i + 1)) / base;
            double beta = 1.0 - cur / prev;
            beta = std::min(beta, 0.999);
            beta = std::max(beta, 1e-12);
            s.beta[i] = beta;
            prev = prev * (1.0 - beta);
        }
    }

    s.alpha.resize(n);
    s.alpha_bar.resize(n);
    double prod = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
    }
    return s;
}

namespace {
void check_step(int t, const NoiseSchedule& sched) {
    if (t < 1 || t > sched.steps)
        throw RangeError("diffusion step " + std::to_string(t) + " outside 1.." +
                         std::to_string(sched.steps));
}
}  // namespace

Array forward_diffuse(const Array& z0, int t, const Array& eps, const NoiseSchedule& sched) {
    check_step(t, sched);
    if (!z0.same_shape(eps))
        throw DimensionError("forward_diffuse: eps shape " + eps.shape_str() + " vs z0 " +
                             z0.shape_str());
    const double ab = sched.alpha_bar_at(t);
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    Array out = z0;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * out[i] + b * eps[i];
    return out;
}

Array reverse_step(const Array& z_t, const Array& eps_hat, int t, const NoiseSchedule& sched,
                   const Array* noise, SampleMode mode) {
    check_step(t, sched);
    if (!z_t.same_shape(eps_hat))
        throw DimensionError("reverse_step: eps_hat shape " + eps_hat.shape_str() + " vs z_t " +
                             z_t.shape_str());
    const double beta = sched.beta_at(t);
    const double ab = sched.alpha_bar_at(t);
    const double eps_coef = beta / std::sqrt(1.0 - ab);

    Array out = z_t;
    if (mode == SampleMode::paper_literal) {
        const double inv = 1.0 / std::sqrt(ab);
        for (std::size_t i = 0; i < out.numel(); ++i)
            out[i] = inv * (out[i] - eps_coef * eps_hat[i]);
        return out;
    }

    const double inv = 1.0 / std::sqrt(sched.alpha_at(t));
    const bool add_noise = t > 1;
    if (add_noise) {
        if (noise == nullptr)
            throw DimensionError("reverse_step: standard mode needs noise for t > 1");
        if (!noise->same_shape(z_t))
            throw DimensionError("reverse_step: noise shape mismatch");
    }
    const double sigma = add_noise ? std::sqrt(beta) : 0.0;
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out[i] = inv * (out[i] - eps_coef * eps_hat[i]);
        if (add_noise) out[i] += sigma * (*noise)[i];
    }
    return out;
}

}  // namespace stadm
