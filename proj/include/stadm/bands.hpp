#pragma once

#include <array>

namespace stadm {

struct FrequencyBand {
    const char* name;
    double lo_hz, hi_hz;
};

/// The five canonical EEG bands used for synthesis and band-power features.
inline constexpr std::array<FrequencyBand, 5> kBands{{
    {"delta", 0.5, 4.0},
    {"theta", 4.0, 8.0},
    {"alpha", 8.0, 13.0},
    {"beta", 13.0, 30.0},
    {"gamma", 30.0, 40.0},
}};

}  // namespace stadm
