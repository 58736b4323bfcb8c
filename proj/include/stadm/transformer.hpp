#pragma once

#include <string>

#include "stadm/param_store.hpp"
#include "stadm/rng.hpp"
#include "stadm/tape.hpp"

namespace stadm {

// Shared pieces of the Transformer stacks: parameter creation (fixed order,
// so initialization is reproducible from a seed) and tape-level forwards.

Array sinusoidal_table(std::size_t positions, std::size_t dim);
Array sinusoidal_embedding(double position, std::size_t dim);  // 1 x dim

void create_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                   Rng& rng, bool bias = true);
void create_layer_norm(ParamStore& store, const std::string& prefix, std::size_t dim);
void create_attention(ParamStore& store, const std::string& prefix, std::size_t dim, Rng& rng);
void create_ffn(ParamStore& store, const std::string& prefix, std::size_t dim,
                std::size_t hidden, Rng& rng);
/// ln1 + attention + ln2 + ffn (hidden = 4 * dim).
void create_encoder_block(ParamStore& store, const std::string& prefix, std::size_t dim,
                          Rng& rng);

Var linear(ParamBinder& bind, const std::string& prefix, Var x, bool bias = true);
Var layer_norm(ParamBinder& bind, const std::string& prefix, Var x);

/// Scaled dot-product attention with h heads over the feature axis.
/// q: Lq x d, k/v: Lk x d; the softmax runs over the Lk axis per head.
Var attention_core(Var q, Var k, Var v, std::size_t heads);

/// Pre-norm multi-head self-attention with output projection:
/// x + W_o(attn(W_q LN(x), ...)). Parameter prefix owns ln/wq/wk/wv/wo.
Var self_attention(ParamBinder& bind, const std::string& prefix, Var x, std::size_t heads);

Var ffn(ParamBinder& bind, const std::string& prefix, Var x);

/// Full pre-norm block: x + MSA(LN1 x), then h + FFN(LN2 h).
Var encoder_block(ParamBinder& bind, const std::string& prefix, Var x, std::size_t heads);

}  // namespace stadm
