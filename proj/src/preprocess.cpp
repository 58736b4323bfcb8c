#include "stadm/preprocess.hpp"

#include <algorithm>
#include <cmath>

#include "stadm/errors.hpp"

namespace stadm {

namespace {

constexpr double kPi = 3.14159265358979323846;

/// Direct form II transposed, with externally supplied initial state.
void lfilter(const Biquad& f, const double* x, double* y, std::size_t n, double z1, double z2) {
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = x[i];
        const double yi = f.b0 * xi + z1;
        z1 = f.b1 * xi - f.a1 * yi + z2;
        z2 = f.b2 * xi - f.a2 * yi;
        y[i] = yi;
    }
}

/// Steady-state filter state for a unit-amplitude constant input; scaled by
/// the first sample before use (the lfilter_zi construction).
void steady_state(const Biquad& f, double* z1, double* z2) {
    const double dc = (f.b0 + f.b1 + f.b2) / (1.0 + f.a1 + f.a2);
    *z1 = dc - f.b0;
    *z2 = f.b2 - f.a2 * dc;
}

}  // namespace

Biquad design_highpass(double cutoff_hz, double sample_rate_hz) {
    if (cutoff_hz <= 0.0 || cutoff_hz >= sample_rate_hz / 2.0)
        throw ConfigError("high-pass cutoff must lie strictly between 0 and Nyquist");
    const double c = std::tan(kPi * cutoff_hz / sample_rate_hz);
    const double c2 = c * c;
    const double sqrt2 = 1.41421356237309504880;
    const double a0 = 1.0 + sqrt2 * c + c2;
    Biquad f;
    f.b0 = 1.0 / a0;
    f.b1 = -2.0 / a0;
    f.b2 = 1.0 / a0;
    f.a1 = 2.0 * (c2 - 1.0) / a0;
    f.a2 = (1.0 - sqrt2 * c + c2) / a0;
    return f;
}

Biquad design_notch(double center_hz, double sample_rate_hz, double q) {
    if (center_hz <= 0.0 || center_hz >= sample_rate_hz / 2.0)
        throw ConfigError("notch frequency must lie strictly between 0 and Nyquist");
    const double w0 = 2.0 * kPi * center_hz / sample_rate_hz;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double cosw = std::cos(w0);
    const double a0 = 1.0 + alpha;
    Biquad f;
    f.b0 = 1.0 / a0;
    f.b1 = -2.0 * cosw / a0;
    f.b2 = 1.0 / a0;
    f.a1 = -2.0 * cosw / a0;
    f.a2 = (1.0 - alpha) / a0;
    return f;
}

std::vector<double> filtfilt(const Biquad& f, const std::vector<double>& x) {
    const std::size_t n = x.size();
    if (n < 2) return x;
    const std::size_t pad = std::min<std::size_t>(9, n - 1);

    // Odd extension keeps value and slope continuous across the ends; the
    // steady-state initial conditions absorb any DC level exactly.
    std::vector<double> ext(n + 2 * pad);
    for (std::size_t i = 0; i < pad; ++i) ext[i] = 2.0 * x[0] - x[pad - i];
    std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));
    for (std::size_t i = 0; i < pad; ++i) ext[n + pad + i] = 2.0 * x[n - 1] - x[n - 2 - i];

    double z1u, z2u;
    steady_state(f, &z1u, &z2u);

    std::vector<double> tmp(ext.size());
    lfilter(f, ext.data(), tmp.data(), ext.size(), z1u * ext.front(), z2u * ext.front());
    std::reverse(tmp.begin(), tmp.end());
    lfilter(f, tmp.data(), tmp.data(), tmp.size(), z1u * tmp.front(), z2u * tmp.front());
    std::reverse(tmp.begin(), tmp.end());

    return std::vector<double>(tmp.begin() + static_cast<std::ptrdiff_t>(pad),
                               tmp.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

EegEpoch preprocess(const EegEpoch& raw, double highpass_hz,
                    const std::vector<double>& notch_hz) {
    const double nyquist = raw.sample_rate_hz / 2.0;
    if (highpass_hz >= nyquist)
        throw ConfigError("high-pass cutoff at or above Nyquist");
    for (double f : notch_hz)
        if (f >= nyquist) throw ConfigError("notch frequency at or above Nyquist");

    std::vector<Biquad> chain;
    if (highpass_hz > 0.0) chain.push_back(design_highpass(highpass_hz, raw.sample_rate_hz));
    for (double f : notch_hz) chain.push_back(design_notch(f, raw.sample_rate_hz));

    EegEpoch out = raw;
    const std::size_t n = raw.samples();
    std::vector<double> row(n);
    for (std::size_t c = 0; c < raw.channels(); ++c) {
        std::copy(raw.data.data() + c * n, raw.data.data() + (c + 1) * n, row.begin());
        for (const Biquad& f : chain) row = filtfilt(f, row);
        std::copy(row.begin(), row.end(), out.data.data() + c * n);
    }
    return out;
}

}  // namespace stadm
