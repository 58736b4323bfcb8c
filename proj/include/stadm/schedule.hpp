#pragma once

#include <string>
#include <vector>

#include "stadm/array.hpp"

namespace stadm {

enum class ScheduleKind { linear, cosine };

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind kind);

/// Per-step diffusion coefficients for t in 1..T. alpha_bar is rebuilt as the
/// running product of alpha after any clipping, so the product identity holds
/// exactly by construction.
struct NoiseSchedule {
    ScheduleKind kind = ScheduleKind::linear;
    int steps = 0;  // T
    std::vector<double> beta, alpha, alpha_bar;

    double beta_at(int t) const { return beta[static_cast<std::size_t>(t - 1)]; }
    double alpha_at(int t) const { return alpha[static_cast<std::size_t>(t - 1)]; }
    double alpha_bar_at(int t) const { return alpha_bar[static_cast<std::size_t>(t - 1)]; }
};

/// Linear: beta evenly spaced from 1e-4 to 0.02. Cosine: squared-cosine
/// alpha_bar profile (offset s = 0.008), betas clipped to (0, 0.999].
NoiseSchedule build_schedule(ScheduleKind kind, int steps);

/// z_t = sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * eps.
Array forward_diffuse(const Array& z0, int t, const Array& eps, const NoiseSchedule& sched);

enum class SampleMode { standard, paper_literal };

SampleMode sample_mode_from_string(const std::string& s);
std::string to_string(SampleMode mode);

/// One reverse step from z_t to z_{t-1}.
/// standard: (z_t - beta_t/sqrt(1-alpha_bar_t) * eps_hat)/sqrt(alpha_t)
///           + sqrt(beta_t) * noise, with zero noise at t = 1.
/// paper_literal: same posterior mean but with a 1/sqrt(alpha_bar_t)
///           prefactor and no noise term (kept for fidelity experiments).
Array reverse_step(const Array& z_t, const Array& eps_hat, int t, const NoiseSchedule& sched,
                   const Array* noise, SampleMode mode);

}  // namespace stadm
