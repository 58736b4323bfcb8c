#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stadm/array.hpp"
#include "stadm/montage.hpp"

namespace stadm {

/// A channels x samples block of signal (microvolts) with its sample rate and
/// electrode montage.
struct EegEpoch {
    Montage montage;
    double sample_rate_hz = 0.0;
    Array data;  // channels x samples

    std::size_t channels() const { return data.ndim() == 2 ? data.shape()[0] : 0; }
    std::size_t samples() const { return data.ndim() == 2 ? data.shape()[1] : 0; }
};

EegEpoch make_epoch(Montage montage, double sample_rate_hz, Array data);

/// Epoch file ("STAD", version 1): u32 channels, u32 samples, f64 rate,
/// montage name, then f32 samples row-major. Values round-trip through f32.
void write_epoch(const std::string& path, const EegEpoch& epoch);
EegEpoch read_epoch(const std::string& path);

/// Cuts round(duration_s * rate)-sample epochs starting at the given sample
/// offsets of a continuous record.
std::vector<EegEpoch> epoch_segments(const EegEpoch& continuous, double duration_s,
                                     const std::vector<std::size_t>& events);

/// Keeps the channel tier for `factor` (see target_channel_count): the stored
/// farthest-point subset for built-in montages, greedy farthest-point
/// selection otherwise. Row data is copied verbatim; indices are increasing.
std::pair<EegEpoch, std::vector<std::size_t>> downsample_channels(const EegEpoch& hr, int factor);

}  // namespace stadm
