#pragma once

#include <cstdint>
#include <vector>

#include "stadm/epoch.hpp"
#include "stadm/param_store.hpp"

namespace stadm {

/// Condition encoder configuration. Each channel is cut into n_patches
/// patches of patch_len samples; every patch becomes one condition token.
struct StcConfig {
    std::size_t n_channels = 0;
    std::size_t n_samples = 0;
    std::size_t patch_len = 0;  // 0 = auto: closest divisor to n_samples / 9
    std::size_t dim = 64;
    std::size_t heads = 4;

    std::size_t n_patches() const { return patch_len == 0 ? 0 : n_samples / patch_len; }
    std::size_t tokens() const { return n_channels * n_patches(); }
    void validate() const;
};

/// Divisor of n_samples closest to n_samples / 9 (9 patches when possible).
std::size_t default_patch_len(std::size_t n_samples);

struct StcEncoder {
    StcConfig cfg;
    ParamStore params;
};

StcEncoder make_stc(const StcConfig& cfg, std::uint64_t seed);

/// Learned linear map of electrode coordinates: n_channels x dim.
Array embed_positions(const StcEncoder& enc, const Montage& montage);

/// Tape-level batch forward. Per channel: patches -> linear patch embedding
/// -> ReLU -> feature batch norm (statistics over every token of the batch)
/// -> plus sinusoidal patch-position encoding and the channel's spatial
/// embedding -> one Transformer block. Returns one tokens() x dim Var per
/// sample.
std::vector<Var> stc_condition_batch(Tape& tape, ParamBinder& bind, const StcEncoder& enc,
                                     const std::vector<const EegEpoch*>& lr_epochs,
                                     NormMode mode);

/// Single-sample convenience wrapper (eval-mode batch norm, no gradients).
Array encode_condition(const StcEncoder& enc, const EegEpoch& lr);

}  // namespace stadm
