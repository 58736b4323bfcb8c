#include "stadm/synth.hpp"

#include <cmath>

#include "stadm/bands.hpp"
#include "stadm/errors.hpp"

namespace stadm {

namespace {

constexpr double kTwoPi = 6.28318530717958647693;
constexpr double kMixSigmaM = 0.03;
constexpr double kSourceDepthM = 0.07;  // sources sit just under the scalp shell

double hann_burst(double t, double center, double width) {
    if (width <= 0.0) return 1.0;
    const double u = (t - center) / width + 0.5;
    if (u <= 0.0 || u >= 1.0) return 0.0;
    const double s = std::sin(3.14159265358979323846 * u);
    return s * s;
}

/// Paul Kellet's three-pole pink-noise shaper; close to 1/f over the audible
/// span and entirely deterministic given the driving white sequence.
class PinkFilter {
public:
    double step(double white) {
        b0_ = 0.99765 * b0_ + white * 0.0990460;
        b1_ = 0.96300 * b1_ + white * 0.2965164;
        b2_ = 0.57000 * b2_ + white * 1.0526913;
        return b0_ + b1_ + b2_ + white * 0.1848;
    }

private:
    double b0_ = 0, b1_ = 0, b2_ = 0;
};

}  // namespace

double source_gain(const std::array<double, 3>& channel_pos,
                   const std::array<double, 3>& source_pos) {
    double d2 = 0;
    for (int k = 0; k < 3; ++k) {
        const double d = channel_pos[k] - source_pos[k];
        d2 += d * d;
    }
    return std::exp(-d2 / (2.0 * kMixSigmaM * kMixSigmaM));
}

std::vector<SynthSource> draw_synth_sources(Rng& rng, const Montage& montage, int n_sources,
                                            double duration_s) {
    if (n_sources < 1) throw ConfigError("synth_epoch needs at least one source");
    if (!montage.has_positions())
        throw DataError("montage `" + montage.name + "` has no geometry for synthesis");

    // Position bounds follow the montage extent so sources sit under the cap.
    double z_min = montage.positions[0][2], z_max = z_min;
    for (const auto& p : montage.positions) {
        z_min = std::min(z_min, p[2]);
        z_max = std::max(z_max, p[2]);
    }

    std::vector<SynthSource> sources;
    sources.reserve(static_cast<std::size_t>(n_sources));
    for (int i = 0; i < n_sources; ++i) {
        SynthSource s;
        const auto& band = kBands[static_cast<std::size_t>(rng.uniform_int(0, 4))];
        s.freq_hz = band.lo_hz + rng.uniform() * (band.hi_hz - band.lo_hz);
        const double z = z_min + rng.uniform() * (z_max - z_min);
        const double phi = rng.uniform() * kTwoPi;
        const double rho = std::sqrt(std::max(0.0, 1.0 - z * z / (0.09 * 0.09))) * 0.09;
        const double shrink = kSourceDepthM / 0.09;
        s.position = {shrink * rho * std::cos(phi), shrink * rho * std::sin(phi), shrink * z};
        s.amplitude_uv = 20.0 + rng.uniform() * 40.0;
        s.phase = rng.uniform() * kTwoPi;
        s.burst_width_s = (0.4 + 0.5 * rng.uniform()) * duration_s;
        s.burst_center_s = rng.uniform() * duration_s;
        sources.push_back(s);
    }
    return sources;
}

EegEpoch synth_epoch_from_sources(const Montage& montage, double duration_s,
                                  double sample_rate_hz, const std::vector<SynthSource>& sources,
                                  std::uint64_t noise_seed, double noise_rel_power) {
    if (!montage.has_positions())
        throw DataError("montage `" + montage.name + "` has no geometry for synthesis");
    if (duration_s <= 0.0 || sample_rate_hz <= 0.0)
        throw ConfigError("synth_epoch: duration and rate must be positive");

    const std::size_t n = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
    const std::size_t ch = montage.channel_count();
    Array data({ch, n});

    // Per-source waveform, shared across channels.
    std::vector<double> wave(n);
    double signal_power = 0.0;
    for (const SynthSource& src : sources) {
        for (std::size_t i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) / sample_rate_hz;
            wave[i] = src.amplitude_uv * hann_burst(t, src.burst_center_s, src.burst_width_s) *
                      std::sin(kTwoPi * src.freq_hz * t + src.phase);
        }
        for (std::size_t c = 0; c < ch; ++c) {
            const double g = source_gain(montage.positions[c], src.position);
            double* row = data.data() + c * n;
            for (std::size_t i = 0; i < n; ++i) row[i] += g * wave[i];
        }
    }
    for (std::size_t i = 0; i < data.numel(); ++i) signal_power += data[i] * data[i];
    signal_power /= static_cast<double>(data.numel());

    if (noise_rel_power > 0.0) {
        const double target = noise_rel_power * (signal_power > 0.0 ? signal_power : 1.0);
        Rng noise_rng(noise_seed);
        std::vector<double> pink(n);
        for (std::size_t c = 0; c < ch; ++c) {
            PinkFilter filt;
            double power = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                pink[i] = filt.step(noise_rng.normal());
                power += pink[i] * pink[i];
            }
            power /= static_cast<double>(n);
            const double s = power > 0.0 ? std::sqrt(target / power) : 0.0;
            double* row = data.data() + c * n;
            for (std::size_t i = 0; i < n; ++i) row[i] += s * pink[i];
        }
    }
    return make_epoch(montage, sample_rate_hz, std::move(data));
}

EegEpoch synth_epoch(std::uint64_t seed, const Montage& montage, double duration_s,
                     double sample_rate_hz, int n_sources) {
    Rng rng(mix_seed(seed, 0x5e));
    auto sources = draw_synth_sources(rng, montage, n_sources, duration_s);
    return synth_epoch_from_sources(montage, duration_s, sample_rate_hz, sources,
                                    mix_seed(seed, 0x4f));
}

}  // namespace stadm
