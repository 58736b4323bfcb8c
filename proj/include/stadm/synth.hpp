#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "stadm/epoch.hpp"
#include "stadm/rng.hpp"

namespace stadm {

/// One synthetic cortical source: a Hann-windowed sinusoidal burst at a fixed
/// scalp-space position, mixed into channels with Gaussian distance gains.
struct SynthSource {
    std::array<double, 3> position;  // meters, head-centered
    double freq_hz = 10.0;
    double amplitude_uv = 40.0;
    double phase = 0.0;
    double burst_center_s = 0.0;
    double burst_width_s = 0.0;  // full Hann width; 0 means the whole epoch
};

/// Spatial mixing gain exp(-d^2 / (2 sigma^2)) with sigma = 0.03 m.
double source_gain(const std::array<double, 3>& channel_pos,
                   const std::array<double, 3>& source_pos);

/// Draws n_sources with band-limited frequencies (uniform over the five EEG
/// bands), random cap positions, amplitudes, phases, and burst windows.
std::vector<SynthSource> draw_synth_sources(Rng& rng, const Montage& montage, int n_sources,
                                            double duration_s);

/// Deterministic synthesis: mixed source bursts plus per-channel 1/f
/// background noise scaled to `noise_rel_power` of the mean signal power.
EegEpoch synth_epoch_from_sources(const Montage& montage, double duration_s,
                                  double sample_rate_hz, const std::vector<SynthSource>& sources,
                                  std::uint64_t noise_seed, double noise_rel_power = 0.1);

EegEpoch synth_epoch(std::uint64_t seed, const Montage& montage, double duration_s,
                     double sample_rate_hz, int n_sources);

}  // namespace stadm
