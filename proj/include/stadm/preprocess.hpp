#pragma once

#include <vector>

#include "stadm/epoch.hpp"

namespace stadm {

/// Second-order IIR section, normalized (a0 = 1).
struct Biquad {
    double b0 = 1, b1 = 0, b2 = 0, a1 = 0, a2 = 0;
};

/// 2nd-order Butterworth high-pass (bilinear transform).
Biquad design_highpass(double cutoff_hz, double sample_rate_hz);

/// RBJ-cookbook notch.
Biquad design_notch(double center_hz, double sample_rate_hz, double q = 30.0);

/// Zero-phase forward-backward filtering with odd-extension padding and
/// steady-state initial conditions, so constant inputs map through the
/// filter's DC gain without edge transients.
std::vector<double> filtfilt(const Biquad& f, const std::vector<double>& x);

/// High-pass (skipped when highpass_hz <= 0), then one notch per listed
/// frequency, all zero-phase. Frequencies at or above Nyquist are rejected.
EegEpoch preprocess(const EegEpoch& raw, double highpass_hz,
                    const std::vector<double>& notch_hz);

}  // namespace stadm
