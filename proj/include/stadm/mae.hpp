#pragma once

#include <cstdint>
#include <vector>

#include "stadm/epoch.hpp"
#include "stadm/param_store.hpp"

namespace stadm {

/// Masked-autoencoder codec configuration. Tokens are non-overlapping
/// fixed-length windows per channel; L = n_channels * n_windows.
struct MaeConfig {
    std::size_t n_channels = 0;
    std::size_t n_samples = 0;
    std::size_t window_len = 0;
    double mask_ratio = 0.5;
    std::size_t latent_dim = 32;
    std::size_t enc_blocks = 2;
    std::size_t dec_blocks = 1;
    std::size_t heads = 4;

    std::size_t n_windows() const { return window_len == 0 ? 0 : n_samples / window_len; }
    std::size_t tokens() const { return n_channels * n_windows(); }
    void validate() const;
};

/// Picks a window length that divides n_samples with the window count in
/// [8, 16] where possible (closest divisor otherwise).
std::size_t default_window_len(std::size_t n_samples);

struct MaeCodec {
    MaeConfig cfg;
    ParamStore params;
};

MaeCodec make_mae(const MaeConfig& cfg, std::uint64_t seed);

/// Channel-major token grid: row c * n_windows + w holds window w of channel
/// c. Concatenating rows back reproduces the epoch exactly.
Array windowize(const EegEpoch& epoch, std::size_t window_len);
EegEpoch dewindowize(const Array& tokens, const Montage& montage, double sample_rate_hz,
                     std::size_t window_len);

/// Exactly round(ratio * n_tokens) entries set, drawn uniformly without
/// replacement; deterministic per seed.
std::vector<bool> sample_mask(std::uint64_t seed, std::size_t n_tokens, double ratio);

/// Pretraining objective: encoder over unmasked tokens only, decoder over
/// the full grid with the shared mask token at masked slots, MSE over masked
/// windows (0 when nothing is masked). with_grads accumulates into params.
double mae_masked_loss(MaeCodec& codec, const EegEpoch& epoch, std::uint64_t seed,
                       bool with_grads);

/// mae_masked_loss with gradient accumulation.
double mae_pretrain_step(MaeCodec& codec, const EegEpoch& epoch, std::uint64_t seed);

/// Adam-driven pretraining loop over a fixed epoch list; returns the
/// per-step loss trace.
std::vector<double> pretrain_mae(MaeCodec& codec, const std::vector<EegEpoch>& epochs,
                                 std::size_t steps, std::uint64_t seed,
                                 double learning_rate = 1e-3);

/// Deterministic full-grid encoding (no masking): tokens() x latent_dim.
Array encode(const MaeCodec& codec, const EegEpoch& epoch);
EegEpoch decode(const MaeCodec& codec, const Array& latent, const Montage& montage,
                double sample_rate_hz);

}  // namespace stadm
