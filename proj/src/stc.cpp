#include "stadm/stc.hpp"

#include <cmath>

#include "stadm/mae.hpp"  // windowize: patches share the token grid layout
#include "stadm/transformer.hpp"

namespace stadm {

void StcConfig::validate() const {
    if (n_channels == 0 || n_samples == 0) throw ConfigError("stc: empty epoch shape");
    if (patch_len == 0 || n_samples % patch_len != 0)
        throw ConfigError("stc: patch length " + std::to_string(patch_len) +
                          " must divide the sample count " + std::to_string(n_samples));
    if (dim % heads != 0) throw ConfigError("stc: dim not divisible by head count");
}

std::size_t default_patch_len(std::size_t n_samples) {
    const double target = static_cast<double>(n_samples) / 9.0;
    std::size_t best = n_samples;
    double best_dist = 1e18;
    for (std::size_t p = 1; p <= n_samples; ++p) {
        if (n_samples % p != 0) continue;
        const double dist = std::fabs(static_cast<double>(p) - target);
        if (dist < best_dist) {
            best_dist = dist;
            best = p;
        }
    }
    return best;
}

StcEncoder make_stc(const StcConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    StcEncoder enc;
    enc.cfg = cfg;
    ParamStore& ps = enc.params;
    Rng rng(mix_seed(seed, 0x57C));

    create_linear(ps, "spatial", 3, cfg.dim, rng);
    create_linear(ps, "patch", cfg.patch_len, cfg.dim, rng);
    create_layer_norm(ps, "patch_bn", cfg.dim);
    ps.create("patch_bn.running_mean", Array::zeros({cfg.dim}), false);
    ps.create("patch_bn.running_var", Array::full({cfg.dim}, 1.0), false);
    create_encoder_block(ps, "block", cfg.dim, rng);
    return enc;
}

namespace {

Array montage_coordinates(const Montage& montage) {
    if (!montage.has_positions())
        throw DataError("montage `" + montage.name + "` has no geometry for the STC encoder");
    Array coords({montage.channel_count(), 3});
    for (std::size_t c = 0; c < montage.channel_count(); ++c)
        for (std::size_t k = 0; k < 3; ++k) coords.at(c, k) = montage.positions[c][k];
    return coords;
}

}  // namespace

Array embed_positions(const StcEncoder& enc, const Montage& montage) {
    Tape tape;
    ParamBinder bind(tape, const_cast<ParamStore&>(enc.params));
    return linear(bind, "spatial", tape.constant(montage_coordinates(montage))).val();
}

std::vector<Var> stc_condition_batch(Tape& tape, ParamBinder& bind, const StcEncoder& enc,
                                     const std::vector<const EegEpoch*>& lr_epochs,
                                     NormMode mode) {
    const StcConfig& cfg = enc.cfg;
    if (lr_epochs.empty()) throw DataError("stc_condition_batch: empty batch");
    for (const EegEpoch* e : lr_epochs)
        if (e->channels() != cfg.n_channels || e->samples() != cfg.n_samples)
            throw DimensionError("stc_condition_batch: epoch shape does not match config");

    const std::size_t tokens = cfg.tokens();
    std::vector<Var> patch_tokens;
    patch_tokens.reserve(lr_epochs.size());
    for (const EegEpoch* e : lr_epochs) {
        Var patches = tape.constant(windowize(*e, cfg.patch_len));
        patch_tokens.push_back(linear(bind, "patch", patches));
    }

    // Batch norm runs over every token row of the whole batch.
    Var stacked = patch_tokens.size() == 1 ? patch_tokens[0] : concat_rows(patch_tokens);
    stacked = relu(stacked);
    ParamStore& ps = bind.store();
    stacked = batch_norm_feature(stacked, bind("patch_bn.gain"), bind("patch_bn.shift"), mode,
                                 ps.value("patch_bn.running_mean"),
                                 ps.value("patch_bn.running_var"));

    // Per-token additive context: sinusoidal patch position (per channel) and
    // the channel's learned spatial embedding.
    std::vector<std::size_t> patch_of(tokens), channel_of(tokens);
    for (std::size_t c = 0; c < cfg.n_channels; ++c)
        for (std::size_t p = 0; p < cfg.n_patches(); ++p) {
            patch_of[c * cfg.n_patches() + p] = p;
            channel_of[c * cfg.n_patches() + p] = c;
        }
    Var pos_table = tape.constant(sinusoidal_table(cfg.n_patches(), cfg.dim));

    std::vector<Var> out;
    out.reserve(lr_epochs.size());
    for (std::size_t s = 0; s < lr_epochs.size(); ++s) {
        Var tok = slice_rows(stacked, s * tokens, tokens);
        Var spatial = linear(bind, "spatial",
                             tape.constant(montage_coordinates(lr_epochs[s]->montage)));
        tok = add(tok, rows_select(spatial, channel_of));
        tok = add(tok, rows_select(pos_table, patch_of));
        out.push_back(encoder_block(bind, "block", tok, cfg.heads));
    }
    return out;
}

Array encode_condition(const StcEncoder& enc, const EegEpoch& lr) {
    Tape tape;
    ParamBinder bind(tape, const_cast<ParamStore&>(enc.params));
    return stc_condition_batch(tape, bind, enc, {&lr}, NormMode::eval)[0].val();
}

}  // namespace stadm
