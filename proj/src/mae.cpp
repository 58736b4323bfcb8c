#include "stadm/mae.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "stadm/transformer.hpp"

namespace stadm {

void MaeConfig::validate() const {
    if (n_channels == 0 || n_samples == 0) throw ConfigError("mae: empty epoch shape");
    if (window_len == 0 || n_samples % window_len != 0)
        throw ConfigError("mae: window length " + std::to_string(window_len) +
                          " must divide the sample count " + std::to_string(n_samples));
    if (mask_ratio < 0.0 || mask_ratio >= 1.0)
        throw ConfigError("mae: mask ratio must lie in [0, 1)");
    if (latent_dim % heads != 0)
        throw ConfigError("mae: latent width not divisible by head count");
}

std::size_t default_window_len(std::size_t n_samples) {
    // Fewest windows within [8, 16]; otherwise the divisor closest to 12
    // windows. Fewer windows keep the token count (and attention cost) low.
    std::size_t best = n_samples;
    double best_score = 1e18;
    for (std::size_t w = 1; w <= n_samples; ++w) {
        if (n_samples % w != 0) continue;
        const std::size_t windows = n_samples / w;
        const double score = (windows >= 8 && windows <= 16)
                                 ? static_cast<double>(windows)
                                 : 100.0 + std::fabs(static_cast<double>(windows) - 12.0);
        if (score < best_score) {
            best_score = score;
            best = w;
        }
    }
    return best;
}

MaeCodec make_mae(const MaeConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    MaeCodec codec;
    codec.cfg = cfg;
    ParamStore& ps = codec.params;
    Rng rng(mix_seed(seed, 0xAE));

    const std::size_t d = cfg.latent_dim;
    create_linear(ps, "embed", cfg.window_len, d, rng);
    ps.create("pos_embed", Array::randn({cfg.n_windows(), d}, rng, 0.02));
    ps.create("chan_embed", Array::randn({cfg.n_channels, d}, rng, 0.02));
    ps.create("mask_token", Array::randn({1, d}, rng, 0.02));
    for (std::size_t b = 0; b < cfg.enc_blocks; ++b)
        create_encoder_block(ps, "enc" + std::to_string(b), d, rng);
    create_layer_norm(ps, "enc_norm", d);
    for (std::size_t b = 0; b < cfg.dec_blocks; ++b)
        create_encoder_block(ps, "dec" + std::to_string(b), d, rng);
    create_linear(ps, "out", d, cfg.window_len, rng);
    return codec;
}

Array windowize(const EegEpoch& epoch, std::size_t window_len) {
    const std::size_t n = epoch.samples();
    if (window_len == 0 || n % window_len != 0)
        throw ConfigError("windowize: window length " + std::to_string(window_len) +
                          " must divide " + std::to_string(n));
    const std::size_t windows = n / window_len;
    Array tokens({epoch.channels() * windows, window_len});
    // rows are contiguous slices of each channel, so this is a pure reshape
    std::memcpy(tokens.data(), epoch.data.data(), epoch.data.numel() * sizeof(double));
    return tokens;
}

EegEpoch dewindowize(const Array& tokens, const Montage& montage, double sample_rate_hz,
                     std::size_t window_len) {
    const std::size_t ch = montage.channel_count();
    if (tokens.ndim() != 2 || tokens.cols() != window_len || tokens.rows() % ch != 0)
        throw DimensionError("dewindowize: token grid does not match montage");
    const std::size_t n = tokens.rows() / ch * window_len;
    Array data({ch, n});
    std::memcpy(data.data(), tokens.data(), tokens.numel() * sizeof(double));
    return make_epoch(montage, sample_rate_hz, std::move(data));
}

std::vector<bool> sample_mask(std::uint64_t seed, std::size_t n_tokens, double ratio) {
    if (ratio < 0.0 || ratio >= 1.0) throw ConfigError("mask ratio must lie in [0, 1)");
    const std::size_t count =
        static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n_tokens)));
    std::vector<std::size_t> order(n_tokens);
    for (std::size_t i = 0; i < n_tokens; ++i) order[i] = i;
    Rng rng(mix_seed(seed, 0x3A5C));
    for (std::size_t i = n_tokens; i > 1; --i) {  // Fisher-Yates
        const std::size_t j =
            static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(order[i - 1], order[j]);
    }
    std::vector<bool> mask(n_tokens, false);
    for (std::size_t i = 0; i < count; ++i) mask[order[i]] = true;
    return mask;
}

namespace {

struct TokenIndexing {
    std::vector<std::size_t> window_of, channel_of;
};

TokenIndexing token_indexing(const MaeConfig& cfg) {
    TokenIndexing ix;
    const std::size_t windows = cfg.n_windows();
    ix.window_of.resize(cfg.tokens());
    ix.channel_of.resize(cfg.tokens());
    for (std::size_t c = 0; c < cfg.n_channels; ++c)
        for (std::size_t w = 0; w < windows; ++w) {
            ix.window_of[c * windows + w] = w;
            ix.channel_of[c * windows + w] = c;
        }
    return ix;
}

/// Window embedding plus learned position and channel embeddings for every
/// token of the full grid.
Var embed_grid(ParamBinder& bind, const MaeConfig& cfg, Var tokens) {
    const TokenIndexing ix = token_indexing(cfg);
    Var emb = linear(bind, "embed", tokens);
    emb = add(emb, rows_select(bind("pos_embed"), ix.window_of));
    return add(emb, rows_select(bind("chan_embed"), ix.channel_of));
}

Var encode_tokens(ParamBinder& bind, const MaeConfig& cfg, Var embedded) {
    Var h = embedded;
    for (std::size_t b = 0; b < cfg.enc_blocks; ++b)
        h = encoder_block(bind, "enc" + std::to_string(b), h, cfg.heads);
    return layer_norm(bind, "enc_norm", h);
}

Var decode_tokens(ParamBinder& bind, const MaeConfig& cfg, Var latent_grid) {
    Var h = latent_grid;
    for (std::size_t b = 0; b < cfg.dec_blocks; ++b)
        h = encoder_block(bind, "dec" + std::to_string(b), h, cfg.heads);
    return linear(bind, "out", h);
}

}  // namespace

double mae_masked_loss(MaeCodec& codec, const EegEpoch& epoch, std::uint64_t seed,
                       bool with_grads) {
    const MaeConfig& cfg = codec.cfg;
    if (epoch.channels() != cfg.n_channels || epoch.samples() != cfg.n_samples)
        throw DimensionError("mae_pretrain_step: epoch shape does not match codec config");

    const std::size_t n_tokens = cfg.tokens();
    const std::vector<bool> mask = sample_mask(seed, n_tokens, cfg.mask_ratio);
    std::vector<std::size_t> masked, unmasked;
    for (std::size_t i = 0; i < n_tokens; ++i) (mask[i] ? masked : unmasked).push_back(i);
    if (unmasked.empty()) throw ConfigError("mae_pretrain_step: every token masked");
    if (masked.empty()) return 0.0;  // empty masked set: loss defined as 0

    const Array tokens = windowize(epoch, cfg.window_len);

    Tape tape;
    ParamBinder bind(tape, codec.params);
    Var grid = tape.constant(tokens);
    Var embedded = embed_grid(bind, cfg, grid);

    Var enc_out = encode_tokens(bind, cfg, rows_select(embedded, unmasked));

    // Reassemble the full grid: encoder outputs at unmasked slots, the shared
    // mask token elsewhere, plus position/channel embeddings for everyone.
    Var mask_rows = rows_select(bind("mask_token"), std::vector<std::size_t>(masked.size(), 0));
    std::vector<std::size_t> perm(n_tokens);
    for (std::size_t i = 0; i < unmasked.size(); ++i) perm[unmasked[i]] = i;
    for (std::size_t j = 0; j < masked.size(); ++j) perm[masked[j]] = unmasked.size() + j;
    Var grid_in = rows_select(concat_rows({enc_out, mask_rows}), perm);

    const TokenIndexing ix = token_indexing(cfg);
    grid_in = add(grid_in, rows_select(bind("pos_embed"), ix.window_of));
    grid_in = add(grid_in, rows_select(bind("chan_embed"), ix.channel_of));

    Var pred = decode_tokens(bind, cfg, grid_in);
    Var loss = mse(rows_select(pred, masked), rows_select(grid, masked));

    if (with_grads) {
        tape.backward(loss);
        bind.accumulate_grads();
    }
    return loss.val()[0];
}

double mae_pretrain_step(MaeCodec& codec, const EegEpoch& epoch, std::uint64_t seed) {
    return mae_masked_loss(codec, epoch, seed, true);
}

std::vector<double> pretrain_mae(MaeCodec& codec, const std::vector<EegEpoch>& epochs,
                                 std::size_t steps, std::uint64_t seed, double learning_rate) {
    if (epochs.empty()) throw DataError("pretrain_mae: no epochs");
    AdamOptimizer adam(learning_rate);
    std::vector<double> trace;
    trace.reserve(steps);
    for (std::size_t step = 0; step < steps; ++step) {
        codec.params.zero_grads();
        const EegEpoch& epoch = epochs[step % epochs.size()];
        const double loss = mae_pretrain_step(codec, epoch, mix_seed(seed, step));
        adam.step(codec.params);
        trace.push_back(loss);
    }
    return trace;
}

Array encode(const MaeCodec& codec, const EegEpoch& epoch) {
    if (epoch.channels() != codec.cfg.n_channels || epoch.samples() != codec.cfg.n_samples)
        throw DimensionError("encode: epoch shape does not match codec config");
    Tape tape;
    ParamBinder bind(tape, const_cast<ParamStore&>(codec.params));
    Var grid = tape.constant(windowize(epoch, codec.cfg.window_len));
    return encode_tokens(bind, codec.cfg, embed_grid(bind, codec.cfg, grid)).val();
}

EegEpoch decode(const MaeCodec& codec, const Array& latent, const Montage& montage,
                double sample_rate_hz) {
    const MaeConfig& cfg = codec.cfg;
    if (latent.ndim() != 2 || latent.rows() != cfg.tokens() || latent.cols() != cfg.latent_dim)
        throw DimensionError("decode: latent shape does not match codec config");

    // Windows are reconstructed through the pathway pretraining actually
    // trains: a mask-token query per position attending over the full latent
    // grid. Queries sit in the second half of a 2L-token pass.
    Tape tape;
    ParamBinder bind(tape, const_cast<ParamStore&>(codec.params));
    const TokenIndexing ix = token_indexing(cfg);
    const std::size_t n_tokens = cfg.tokens();

    Var pos_rows = rows_select(bind("pos_embed"), ix.window_of);
    Var chan_rows = rows_select(bind("chan_embed"), ix.channel_of);
    Var context = add(add(tape.constant(latent), pos_rows), chan_rows);
    Var queries = add(
        add(rows_select(bind("mask_token"), std::vector<std::size_t>(n_tokens, 0)), pos_rows),
        chan_rows);

    Var out = decode_tokens(bind, cfg, concat_rows({context, queries}));
    const Array tokens = slice_rows(out, n_tokens, n_tokens).val();
    return dewindowize(tokens, montage, sample_rate_hz, cfg.window_len);
}

}  // namespace stadm
