#pragma once

#include <cstdint>
#include <vector>

#include "stadm/param_store.hpp"

namespace stadm {

/// Denoiser configuration. dim is split evenly across the conv scales and
/// across the attention heads; latent_dim is the diffused token width and
/// cond_dim the condition token width.
struct MtdConfig {
    std::vector<std::size_t> kernels{3, 5, 7, 9};
    std::size_t blocks = 2;
    std::size_t heads = 16;
    std::size_t dim = 64;
    std::size_t latent_dim = 0;
    std::size_t cond_dim = 64;

    std::size_t scale_filters() const { return dim / kernels.size(); }
    void validate() const;
};

struct MtdDenoiser {
    MtdConfig cfg;
    ParamStore params;
};

MtdDenoiser make_mtd(const MtdConfig& cfg, std::uint64_t seed);

/// Per kernel size: 1D convolution along the token axis (latent features as
/// conv channels), batch norm per feature over all tokens of the batch, then
/// feature-axis concatenation across scales. One L x dim Var per sample.
std::vector<Var> multi_scale_features_batch(Tape& tape, ParamBinder& bind,
                                            const MtdDenoiser& mtd,
                                            const std::vector<Var>& z_list, NormMode mode);

/// o = h + MSA(LN(h)); block_idx selects the parameter group.
Var self_attention_block(ParamBinder& bind, const MtdDenoiser& mtd, std::size_t block_idx,
                         Var h);

/// Queries from the latent stream, keys/values from the condition; the query
/// and key rows are layer-normalized before the scaled dot product. Residual
/// attention add, then a pre-norm FFN with residual.
Var cross_attention_block(ParamBinder& bind, const MtdDenoiser& mtd, std::size_t block_idx,
                          Var o, Var cond);

/// Sinusoidal embedding of the diffusion step through a 2-layer projection;
/// appended to the condition sequence as one extra token (1 x cond_dim).
Var timestep_token(Tape& tape, ParamBinder& bind, const MtdDenoiser& mtd, int t);

/// Full denoiser: multi-scale features, `blocks` rounds of self + cross
/// attention, final layer norm, zero-initialized linear decoder back to
/// latent width. cond entries must already include the timestep token.
std::vector<Var> predict_noise_batch(Tape& tape, ParamBinder& bind, const MtdDenoiser& mtd,
                                     const std::vector<Var>& z_list,
                                     const std::vector<Var>& cond_list, NormMode mode);

/// Single-sample eval-mode convenience wrapper (no gradients).
Array predict_noise(const MtdDenoiser& mtd, const Array& z_t, int t,
                    const Array& cond_with_time);

/// Appends the timestep token for t to a base condition matrix (eval mode).
Array condition_with_time(const MtdDenoiser& mtd, const Array& cond_base, int t);

}  // namespace stadm
