#include "stadm/mtd.hpp"

#include <cmath>

#include "stadm/transformer.hpp"

namespace stadm {

void MtdConfig::validate() const {
    if (kernels.empty()) throw ConfigError("mtd: no conv kernel sizes");
    for (std::size_t k : kernels)
        if (k % 2 == 0) throw ConfigError("mtd: conv kernel sizes must be odd");
    if (dim % kernels.size() != 0)
        throw ConfigError("mtd: dim must be divisible by the number of conv scales");
    if (dim % heads != 0) throw ConfigError("mtd: dim not divisible by head count");
    if (latent_dim == 0) throw ConfigError("mtd: latent width unset");
    if (blocks == 0) throw ConfigError("mtd: need at least one block");
}

namespace {
std::string scale_prefix(std::size_t kernel) { return "conv" + std::to_string(kernel); }
std::string block_prefix(std::size_t i) { return "block" + std::to_string(i); }
}  // namespace

MtdDenoiser make_mtd(const MtdConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    MtdDenoiser mtd;
    mtd.cfg = cfg;
    ParamStore& ps = mtd.params;
    Rng rng(mix_seed(seed, 0x3D));

    const std::size_t f = cfg.scale_filters();
    for (std::size_t k : cfg.kernels) {
        const std::string p = scale_prefix(k);
        const double s = 1.0 / std::sqrt(static_cast<double>(cfg.latent_dim * k));
        ps.create(p + ".weight", Array::randn({f, cfg.latent_dim, k}, rng, s));
        ps.create(p + ".bias", Array::zeros({f}));
        create_layer_norm(ps, p + "_bn", f);
        ps.create(p + "_bn.running_mean", Array::zeros({f}), false);
        ps.create(p + "_bn.running_var", Array::full({f}, 1.0), false);
    }

    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        const std::string p = block_prefix(b);
        create_layer_norm(ps, p + ".ln1", cfg.dim);
        create_attention(ps, p + ".attn", cfg.dim, rng);
        const double sq = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
        const double sc = 1.0 / std::sqrt(static_cast<double>(cfg.cond_dim));
        ps.create(p + ".cross.wq", Array::randn({cfg.dim, cfg.dim}, rng, sq));
        ps.create(p + ".cross.wk", Array::randn({cfg.cond_dim, cfg.dim}, rng, sc));
        ps.create(p + ".cross.wv", Array::randn({cfg.cond_dim, cfg.dim}, rng, sc));
        create_layer_norm(ps, p + ".cross.lnq", cfg.dim);
        create_layer_norm(ps, p + ".cross.lnk", cfg.dim);
        create_layer_norm(ps, p + ".ln2", cfg.dim);
        create_ffn(ps, p + ".ffn", cfg.dim, 4 * cfg.dim, rng);
    }

    create_layer_norm(ps, "final_norm", cfg.dim);
    // Zero-initialized decoder: the untrained denoiser predicts zero noise.
    ps.create("decoder.weight", Array::zeros({cfg.dim, cfg.latent_dim}));
    ps.create("decoder.bias", Array::zeros({cfg.latent_dim}));

    create_linear(ps, "time.fc1", cfg.cond_dim, cfg.cond_dim, rng);
    create_linear(ps, "time.fc2", cfg.cond_dim, cfg.cond_dim, rng);
    return mtd;
}

std::vector<Var> multi_scale_features_batch(Tape& tape, ParamBinder& bind,
                                            const MtdDenoiser& mtd,
                                            const std::vector<Var>& z_list, NormMode mode) {
    (void)tape;  // operands already live on the callers' tape
    const MtdConfig& cfg = mtd.cfg;
    if (z_list.empty()) throw DataError("multi_scale_features_batch: empty batch");
    const std::size_t tokens = z_list[0].val().rows();
    for (const Var& z : z_list)
        if (z.val().cols() != cfg.latent_dim || z.val().rows() != tokens)
            throw DimensionError("multi_scale_features_batch: latent shape mismatch");

    ParamStore& ps = bind.store();
    std::vector<Var> per_scale;
    per_scale.reserve(cfg.kernels.size());
    for (std::size_t k : cfg.kernels) {
        const std::string p = scale_prefix(k);
        std::vector<Var> conv_out;
        conv_out.reserve(z_list.size());
        for (const Var& z : z_list)
            conv_out.push_back(
                transpose(conv1d_same(transpose(z), bind(p + ".weight"), bind(p + ".bias"))));
        Var stacked = conv_out.size() == 1 ? conv_out[0] : concat_rows(conv_out);
        per_scale.push_back(batch_norm_feature(stacked, bind(p + "_bn.gain"),
                                               bind(p + "_bn.shift"), mode,
                                               ps.value(p + "_bn.running_mean"),
                                               ps.value(p + "_bn.running_var")));
    }
    Var features = per_scale.size() == 1 ? per_scale[0] : concat_cols(per_scale);

    std::vector<Var> out;
    out.reserve(z_list.size());
    for (std::size_t s = 0; s < z_list.size(); ++s)
        out.push_back(slice_rows(features, s * tokens, tokens));
    return out;
}

Var self_attention_block(ParamBinder& bind, const MtdDenoiser& mtd, std::size_t block_idx,
                         Var h) {
    const std::string p = block_prefix(block_idx);
    return add(h, self_attention(bind, p + ".attn", layer_norm(bind, p + ".ln1", h),
                                 mtd.cfg.heads));
}

Var cross_attention_block(ParamBinder& bind, const MtdDenoiser& mtd, std::size_t block_idx,
                          Var o, Var cond) {
    const MtdConfig& cfg = mtd.cfg;
    if (cond.val().cols() != cfg.cond_dim)
        throw DimensionError("cross_attention_block: condition width " +
                             std::to_string(cond.val().cols()) + " vs configured " +
                             std::to_string(cfg.cond_dim));
    const std::string p = block_prefix(block_idx) + ".cross";
    Var q = layer_norm(bind, p + ".lnq", matmul(o, bind(p + ".wq")));
    Var k = layer_norm(bind, p + ".lnk", matmul(cond, bind(p + ".wk")));
    Var v = matmul(cond, bind(p + ".wv"));
    Var fused = add(o, attention_core(q, k, v, cfg.heads));
    const std::string bp = block_prefix(block_idx);
    return add(fused, ffn(bind, bp + ".ffn", layer_norm(bind, bp + ".ln2", fused)));
}

Var timestep_token(Tape& tape, ParamBinder& bind, const MtdDenoiser& mtd, int t) {
    Var emb = tape.constant(sinusoidal_embedding(static_cast<double>(t), mtd.cfg.cond_dim));
    return linear(bind, "time.fc2", gelu(linear(bind, "time.fc1", emb)));
}

std::vector<Var> predict_noise_batch(Tape& tape, ParamBinder& bind, const MtdDenoiser& mtd,
                                     const std::vector<Var>& z_list,
                                     const std::vector<Var>& cond_list, NormMode mode) {
    const MtdConfig& cfg = mtd.cfg;
    if (cond_list.size() != z_list.size())
        throw DimensionError("predict_noise_batch: batch size mismatch");

    std::vector<Var> h_list = multi_scale_features_batch(tape, bind, mtd, z_list, mode);
    std::vector<Var> out;
    out.reserve(z_list.size());
    for (std::size_t s = 0; s < z_list.size(); ++s) {
        Var h = h_list[s];
        for (std::size_t b = 0; b < cfg.blocks; ++b) {
            Var o = self_attention_block(bind, mtd, b, h);
            h = cross_attention_block(bind, mtd, b, o, cond_list[s]);
        }
        h = layer_norm(bind, "final_norm", h);
        out.push_back(linear(bind, "decoder", h));
    }
    return out;
}

Array predict_noise(const MtdDenoiser& mtd, const Array& z_t, int t,
                    const Array& cond_with_time) {
    (void)t;  // the timestep enters through the appended condition token
    Tape tape;
    ParamBinder bind(tape, const_cast<ParamStore&>(mtd.params));
    std::vector<Var> out = predict_noise_batch(tape, bind, mtd, {tape.constant(z_t)},
                                               {tape.constant(cond_with_time)}, NormMode::eval);
    return out[0].val();
}

Array condition_with_time(const MtdDenoiser& mtd, const Array& cond_base, int t) {
    Tape tape;
    ParamBinder bind(tape, const_cast<ParamStore&>(mtd.params));
    Var token = timestep_token(tape, bind, mtd, t);
    return concat_rows({tape.constant(cond_base), token}).val();
}

}  // namespace stadm
