#include "stadm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>

#include "stadm/transformer.hpp"

namespace stadm {

namespace fs = std::filesystem;

std::vector<EpochPair> load_pair_dataset(const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError("dataset directory not found: " + dir);
    std::vector<std::string> lr_stems, hr_stems;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        auto ends_with = [&name](const std::string& suffix) {
            return name.size() > suffix.size() &&
                   name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
        };
        if (ends_with(".lr.stad")) lr_stems.push_back(name.substr(0, name.size() - 8));
        else if (ends_with(".hr.stad")) hr_stems.push_back(name.substr(0, name.size() - 8));
    }
    std::sort(lr_stems.begin(), lr_stems.end());
    std::sort(hr_stems.begin(), hr_stems.end());
    if (hr_stems.empty()) throw DataError("no epoch pairs (*.lr.stad / *.hr.stad) in " + dir);
    if (lr_stems != hr_stems) {
        for (const auto& s : hr_stems)
            if (!std::binary_search(lr_stems.begin(), lr_stems.end(), s))
                throw DataError("missing LR epoch for pair `" + s + "` in " + dir);
        for (const auto& s : lr_stems)
            if (!std::binary_search(hr_stems.begin(), hr_stems.end(), s))
                throw DataError("missing HR epoch for pair `" + s + "` in " + dir);
    }

    std::vector<EpochPair> pairs;
    pairs.reserve(hr_stems.size());
    for (const auto& stem : hr_stems) {
        EpochPair p;
        p.name = stem;
        p.lr = read_epoch((fs::path(dir) / (stem + ".lr.stad")).string());
        p.hr = read_epoch((fs::path(dir) / (stem + ".hr.stad")).string());
        if (p.lr.sample_rate_hz != p.hr.sample_rate_hz || p.lr.samples() != p.hr.samples())
            throw DataError("pair `" + stem + "`: LR and HR rate or length disagree");
        pairs.push_back(std::move(p));
    }
    for (const EpochPair& p : pairs) {
        if (p.lr.montage.name != pairs[0].lr.montage.name ||
            p.hr.montage.name != pairs[0].hr.montage.name ||
            p.lr.samples() != pairs[0].lr.samples() ||
            p.lr.sample_rate_hz != pairs[0].lr.sample_rate_hz)
            throw DataError("pair `" + p.name + "`: montage or shape differs from the rest");
    }
    return pairs;
}

Array encode_latent(const TrainedModel& model, const EegEpoch& hr) {
    if (model.mae.has_value()) return encode(*model.mae, hr);
    Array tokens = windowize(hr, model.config.window_len);
    const double inv = 1.0 / model.config.signal_scale_uv;
    for (std::size_t i = 0; i < tokens.numel(); ++i) tokens[i] *= inv;
    return tokens;
}

EegEpoch decode_latent(const TrainedModel& model, const Array& z0) {
    const TrainConfig& cfg = model.config;
    Montage hr_montage = is_builtin_montage(cfg.hr_montage)
                             ? builtin_montage(cfg.hr_montage)
                             : montage_without_geometry(cfg.hr_montage, cfg.hr_channels);
    if (model.mae.has_value())
        return decode(*model.mae, z0, hr_montage, cfg.sample_rate_hz);
    Array tokens = z0;
    for (std::size_t i = 0; i < tokens.numel(); ++i) tokens[i] *= cfg.signal_scale_uv;
    return dewindowize(tokens, hr_montage, cfg.sample_rate_hz, cfg.window_len);
}

TrainedModel build_model(TrainConfig config, const EegEpoch& lr_sample,
                         const EegEpoch& hr_sample, const std::string& mae_ckpt_path) {
    TrainedModel model;

    config.lr_montage = lr_sample.montage.name;
    config.hr_montage = hr_sample.montage.name;
    config.lr_channels = lr_sample.channels();
    config.hr_channels = hr_sample.channels();
    config.n_samples = hr_sample.samples();
    config.sample_rate_hz = hr_sample.sample_rate_hz;

    std::size_t latent_dim = 0;
    if (config.latent_bypass) {
        if (config.window_len == 0) config.window_len = default_window_len(config.n_samples);
        if (config.n_samples % config.window_len != 0)
            throw ConfigError("latent.window_len must divide the sample count");
        latent_dim = config.window_len;
    } else {
        if (mae_ckpt_path.empty())
            throw DataError("MAE latent space selected but no codec checkpoint given");
        MaeCodec codec = load_mae_checkpoint(mae_ckpt_path);
        if (codec.cfg.n_channels != hr_sample.channels() ||
            codec.cfg.n_samples != hr_sample.samples())
            throw DataError("MAE codec was trained for " +
                            std::to_string(codec.cfg.n_channels) + "x" +
                            std::to_string(codec.cfg.n_samples) + " epochs, dataset is " +
                            std::to_string(hr_sample.channels()) + "x" +
                            std::to_string(hr_sample.samples()));
        latent_dim = codec.cfg.latent_dim;
        config.window_len = codec.cfg.window_len;
        model.mae = std::move(codec);
    }

    if (config.stc_patch_len == 0) config.stc_patch_len = default_patch_len(config.n_samples);

    StcConfig stc_cfg;
    stc_cfg.n_channels = config.lr_channels;
    stc_cfg.n_samples = config.n_samples;
    stc_cfg.patch_len = config.stc_patch_len;
    stc_cfg.dim = config.stc_dim;
    stc_cfg.heads = config.stc_heads;
    model.stc = make_stc(stc_cfg, mix_seed(config.seed, 1));

    MtdConfig mtd_cfg;
    mtd_cfg.kernels = config.mtd_kernels;
    mtd_cfg.blocks = config.mtd_blocks;
    mtd_cfg.heads = config.mtd_heads;
    mtd_cfg.dim = config.mtd_dim;
    mtd_cfg.latent_dim = latent_dim;
    mtd_cfg.cond_dim = config.stc_dim;
    model.mtd = make_mtd(mtd_cfg, mix_seed(config.seed, 2));

    model.config = std::move(config);
    return model;
}

double training_step(TrainedModel& model, const std::vector<const EpochPair*>& batch,
                     const NoiseSchedule& sched, Rng& rng, AdamOptimizer& opt_stc,
                     AdamOptimizer& opt_mtd) {
    if (batch.empty()) throw DataError("training_step: empty batch");
    model.stc.params.zero_grads();
    model.mtd.params.zero_grads();

    const std::size_t b = batch.size();
    std::vector<Array> z_t(b), eps(b);
    std::vector<int> t(b);
    for (std::size_t s = 0; s < b; ++s) {
        const Array z0 = encode_latent(model, batch[s]->hr);
        t[s] = static_cast<int>(rng.uniform_int(1, sched.steps));
        Array noise(z0.shape());
        for (std::size_t i = 0; i < noise.numel(); ++i) noise[i] = rng.normal();
        z_t[s] = forward_diffuse(z0, t[s], noise, sched);
        eps[s] = std::move(noise);
    }

    Tape tape;
    ParamBinder bind_stc(tape, model.stc.params);
    ParamBinder bind_mtd(tape, model.mtd.params);

    std::vector<const EegEpoch*> lr_batch(b);
    for (std::size_t s = 0; s < b; ++s) lr_batch[s] = &batch[s]->lr;
    std::vector<Var> conds =
        stc_condition_batch(tape, bind_stc, model.stc, lr_batch, NormMode::train);
    for (std::size_t s = 0; s < b; ++s)
        conds[s] = concat_rows({conds[s], timestep_token(tape, bind_mtd, model.mtd, t[s])});

    std::vector<Var> z_vars;
    z_vars.reserve(b);
    for (std::size_t s = 0; s < b; ++s) z_vars.push_back(tape.constant(z_t[s]));
    std::vector<Var> eps_hat =
        predict_noise_batch(tape, bind_mtd, model.mtd, z_vars, conds, NormMode::train);

    Var loss;
    for (std::size_t s = 0; s < b; ++s) {
        Var term = mse(eps_hat[s], tape.constant(eps[s]));
        loss = s == 0 ? term : add(loss, term);
    }
    loss = scale(loss, 1.0 / static_cast<double>(b));

    const double value = loss.val()[0];
    if (!std::isfinite(value)) throw NumericError("training loss is not finite");
    tape.backward(loss);
    bind_stc.accumulate_grads();
    bind_mtd.accumulate_grads();

    opt_stc.step(model.stc.params);
    opt_mtd.step(model.mtd.params);
    return value;
}

TrainedModel train(TrainConfig config, const std::string& data_dir,
                   const std::string& mae_ckpt_path) {
    std::vector<EpochPair> pairs = load_pair_dataset(data_dir);
    TrainedModel model = build_model(std::move(config), pairs[0].lr, pairs[0].hr, mae_ckpt_path);
    const TrainConfig& cfg = model.config;

    const NoiseSchedule sched = build_schedule(cfg.schedule, cfg.diffusion_steps);
    AdamOptimizer opt_stc(cfg.learning_rate);
    AdamOptimizer opt_mtd(cfg.learning_rate);
    Rng order_rng(mix_seed(cfg.seed, 3));
    Rng step_rng(mix_seed(cfg.seed, 4));

    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    model.loss_trace.reserve(cfg.epochs * (pairs.size() / cfg.batch_size + 1));
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {  // Fisher-Yates
            const std::size_t j = static_cast<std::size_t>(
                order_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<const EpochPair*> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(&pairs[order[i]]);
            model.loss_trace.push_back(
                training_step(model, batch, sched, step_rng, opt_stc, opt_mtd));
        }
        if (cfg.validate_every > 0 && (epoch + 1) % cfg.validate_every == 0) {
            // Diagnostic only: reverse-chain a training pair and report its
            // reconstruction error against the HR epoch.
            const EegEpoch sr = super_resolve(model, pairs[0].lr, mix_seed(cfg.seed, epoch));
            double err = 0;
            for (std::size_t i = 0; i < sr.data.numel(); ++i) {
                const double d = sr.data[i] - pairs[0].hr.data[i];
                err += d * d;
            }
            std::cerr << "[validate] epoch " << (epoch + 1) << " decode mse "
                      << err / static_cast<double>(sr.data.numel()) << "\n";
        }
    }
    return model;
}

EegEpoch super_resolve(const TrainedModel& model, const EegEpoch& lr, std::uint64_t seed,
                       SampleMode mode) {
    const TrainConfig& cfg = model.config;
    if (lr.montage.name != cfg.lr_montage || lr.channels() != cfg.lr_channels)
        throw DataError("super_resolve: LR montage `" + lr.montage.name +
                        "` does not match the training montage `" + cfg.lr_montage + "`");
    if (lr.samples() != cfg.n_samples)
        throw DataError("super_resolve: LR epoch length does not match training data");

    const NoiseSchedule sched = build_schedule(cfg.schedule, cfg.diffusion_steps);
    const Array cond_base = encode_condition(model.stc, lr);

    const std::size_t tokens = cfg.hr_channels * (cfg.n_samples / cfg.window_len);
    const std::size_t latent_dim = model.mtd.cfg.latent_dim;

    Rng rng(mix_seed(seed, 0x5A));
    Array z({tokens, latent_dim});
    for (std::size_t i = 0; i < z.numel(); ++i) z[i] = rng.normal();

    Array noise({tokens, latent_dim});
    for (int t = sched.steps; t >= 1; --t) {
        const Array cond_t = condition_with_time(model.mtd, cond_base, t);
        const Array eps_hat = predict_noise(model.mtd, z, t, cond_t);
        const Array* noise_ptr = nullptr;
        if (mode == SampleMode::standard && t > 1) {
            for (std::size_t i = 0; i < noise.numel(); ++i) noise[i] = rng.normal();
            noise_ptr = &noise;
        }
        z = reverse_step(z, eps_hat, t, sched, noise_ptr, mode);
    }
    if (!z.all_finite()) throw NumericError("super_resolve: non-finite latent after sampling");
    return decode_latent(model, z);
}

}  // namespace stadm
