#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "stadm/pipeline.hpp"
#include "stadm/synth.hpp"
#include "test_util.hpp"

using namespace stadm;
using testutil::bit_identical;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("stadm_pipe_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string str() const { return path.string(); }
};

// 16-channel HR -> 8-channel LR pairs, 30 samples at 256 Hz.
void write_toy_dataset(const std::string& dir, std::size_t n_pairs, std::uint64_t seed) {
    Montage hr_montage = load_montage("synthetic-16");
    for (std::size_t i = 0; i < n_pairs; ++i) {
        EegEpoch hr = synth_epoch(seed + i, hr_montage, 30.0 / 256.0, 256.0, 2);
        auto [lr, kept] = downsample_channels(hr, 2);
        char stem[16];
        std::snprintf(stem, sizeof stem, "p%03zu", i);
        write_epoch(dir + "/" + stem + ".hr.stad", hr);
        write_epoch(dir + "/" + stem + ".lr.stad", lr);
    }
}

TrainConfig toy_config(std::uint64_t seed) {
    TrainConfig cfg = desk_defaults();
    cfg.seed = seed;
    cfg.latent_bypass = true;
    cfg.diffusion_steps = 20;
    cfg.batch_size = 4;
    cfg.epochs = 10;
    cfg.learning_rate = 1e-3;
    cfg.stc_dim = 16;
    cfg.stc_heads = 4;
    cfg.mtd_kernels = {3, 5};
    cfg.mtd_blocks = 1;
    cfg.mtd_heads = 4;
    cfg.mtd_dim = 16;
    cfg.signal_scale_uv = 30.0;
    return cfg;
}

}  // namespace

TEST_CASE("config text round-trips") {
    TrainConfig cfg = toy_config(7);
    cfg.lr_montage = "synthetic-16/fps8";
    cfg.hr_montage = "synthetic-16";
    cfg.lr_channels = 8;
    cfg.hr_channels = 16;
    cfg.n_samples = 30;
    cfg.sample_rate_hz = 256.0;
    TrainConfig back = config_from_text(config_to_text(cfg));
    CHECK(config_to_text(back) == config_to_text(cfg));
    CHECK(back.mtd_kernels == cfg.mtd_kernels);
    CHECK(back.latent_bypass == cfg.latent_bypass);

    CHECK_THROWS_AS((void)config_from_text("nonsense.key = 3\n"), ConfigError);
    CHECK_THROWS_AS((void)config_from_text("training.batch_size\n"), ParseError);
    CHECK_THROWS_AS((void)config_from_text("training.batch_size = 1\n"), ConfigError);
}

TEST_CASE("pair dataset loading validates pairing") {
    TempDir dir;
    SUBCASE("empty directory is a data error") {
        CHECK_THROWS_AS((void)load_pair_dataset(dir.str()), DataError);
    }
    SUBCASE("missing LR side is a data error") {
        write_toy_dataset(dir.str(), 2, 1);
        fs::remove(dir.path / "p001.lr.stad");
        CHECK_THROWS_AS((void)load_pair_dataset(dir.str()), DataError);
    }
    SUBCASE("pairs load sorted with shared shapes") {
        write_toy_dataset(dir.str(), 3, 1);
        auto pairs = load_pair_dataset(dir.str());
        REQUIRE(pairs.size() == 3);
        CHECK(pairs[0].name == "p000");
        CHECK(pairs[2].name == "p002");
        CHECK(pairs[0].lr.channels() == 8);
        CHECK(pairs[0].hr.channels() == 16);
    }
}

TEST_CASE("initial loss sits at the variance of the injected noise") {
    TempDir dir;
    write_toy_dataset(dir.str(), 64, 9);
    auto pairs = load_pair_dataset(dir.str());

    TrainConfig cfg = toy_config(3);
    cfg.batch_size = 64;
    TrainedModel model = build_model(cfg, pairs[0].lr, pairs[0].hr, "");

    std::vector<const EpochPair*> batch;
    for (const auto& p : pairs) batch.push_back(&p);
    NoiseSchedule sched = build_schedule(cfg.schedule, cfg.diffusion_steps);
    AdamOptimizer o1(cfg.learning_rate), o2(cfg.learning_rate);
    Rng rng(1);
    const double loss = training_step(model, batch, sched, rng, o1, o2);
    CHECK(loss == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("gradients reach nearly every parameter and the codec stays frozen") {
    TempDir dir;
    write_toy_dataset(dir.str(), 4, 11);
    auto pairs = load_pair_dataset(dir.str());

    TrainConfig cfg = toy_config(5);
    TrainedModel model = build_model(cfg, pairs[0].lr, pairs[0].hr, "");

    std::vector<const EpochPair*> batch;
    for (const auto& p : pairs) batch.push_back(&p);
    NoiseSchedule sched = build_schedule(cfg.schedule, cfg.diffusion_steps);
    AdamOptimizer o1(cfg.learning_rate), o2(cfg.learning_rate);
    Rng rng(2);
    // First step only reaches the (zero-initialized) decoder; from the second
    // step on, gradients flow through the whole stack.
    (void)training_step(model, batch, sched, rng, o1, o2);
    (void)training_step(model, batch, sched, rng, o1, o2);

    std::size_t total = 0, nonzero = 0;
    for (const auto* store : {&model.stc.params, &model.mtd.params}) {
        for (const auto& [path, e] : *store) {
            if (!e.trainable) continue;
            for (std::size_t i = 0; i < e.grad.numel(); ++i) {
                ++total;
                if (e.grad[i] != 0.0) ++nonzero;
            }
        }
    }
    CHECK(static_cast<double>(nonzero) >= 0.99 * static_cast<double>(total));
}

TEST_CASE("short training run reduces the loss and is deterministic") {
    TempDir dir;
    write_toy_dataset(dir.str(), 4, 21);

    TrainConfig cfg = toy_config(17);
    cfg.epochs = 200;  // batch = whole set, so one step per epoch
    TrainedModel a = train(cfg, dir.str(), "");
    REQUIRE(a.loss_trace.size() == 200);
    double head = 0, tail = 0;
    for (int i = 0; i < 20; ++i) head += a.loss_trace[static_cast<std::size_t>(i)];
    for (int i = 180; i < 200; ++i) tail += a.loss_trace[static_cast<std::size_t>(i)];
    CHECK(tail < 0.5 * head);

    TrainedModel b = train(cfg, dir.str(), "");
    CHECK(a.loss_trace == b.loss_trace);  // bit-identical trace
}

TEST_CASE("super_resolve shapes, determinism, and montage checks") {
    TempDir dir;
    write_toy_dataset(dir.str(), 4, 31);
    TrainConfig cfg = toy_config(23);
    cfg.epochs = 5;
    TrainedModel model = train(cfg, dir.str(), "");

    auto pairs = load_pair_dataset(dir.str());
    EegEpoch sr1 = super_resolve(model, pairs[0].lr, 77);
    CHECK(sr1.channels() == 16);
    CHECK(sr1.samples() == 30);
    CHECK(sr1.montage.name == "synthetic-16");
    CHECK(sr1.data.all_finite());

    EegEpoch sr2 = super_resolve(model, pairs[0].lr, 77);
    CHECK(bit_identical(sr1.data, sr2.data));
    EegEpoch sr3 = super_resolve(model, pairs[0].lr, 78);
    CHECK_FALSE(bit_identical(sr1.data, sr3.data));

    // paper-literal mode is deterministic and produces the same shape
    EegEpoch srp = super_resolve(model, pairs[0].lr, 77, SampleMode::paper_literal);
    CHECK(srp.channels() == 16);
    CHECK(bit_identical(srp.data, super_resolve(model, pairs[0].lr, 77,
                                                SampleMode::paper_literal).data));

    EegEpoch wrong = pairs[0].hr;  // 16-channel epoch where 8 channels expected
    CHECK_THROWS_AS((void)super_resolve(model, wrong, 1), DataError);
}

TEST_CASE("checkpoints round-trip the whole model") {
    TempDir dir;
    write_toy_dataset(dir.str(), 4, 41);
    TrainConfig cfg = toy_config(29);
    cfg.epochs = 3;
    TrainedModel model = train(cfg, dir.str(), "");

    const std::string ckpt = dir.str() + "/model.stpk";
    save_checkpoint(ckpt, model);
    TrainedModel loaded = load_checkpoint(ckpt);

    CHECK(config_to_text(loaded.config) == config_to_text(model.config));
    CHECK(loaded.loss_trace == model.loss_trace);
    CHECK(loaded.stc.params.size() == model.stc.params.size());
    CHECK(loaded.mtd.params.size() == model.mtd.params.size());

    auto pairs = load_pair_dataset(dir.str());
    EegEpoch sr_orig = super_resolve(model, pairs[1].lr, 5);
    EegEpoch sr_loaded = super_resolve(loaded, pairs[1].lr, 5);
    CHECK(bit_identical(sr_orig.data, sr_loaded.data));

    // a second save of the loaded model is byte-identical
    const std::string ckpt2 = dir.str() + "/model2.stpk";
    save_checkpoint(ckpt2, loaded);
    std::ifstream f1(ckpt, std::ios::binary), f2(ckpt2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), {});
    std::string b2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(b1 == b2);
}

TEST_CASE("mae-backed training freezes the codec") {
    TempDir dir;
    write_toy_dataset(dir.str(), 4, 51);
    auto pairs = load_pair_dataset(dir.str());

    MaeConfig mae_cfg;
    mae_cfg.n_channels = 16;
    mae_cfg.n_samples = 30;
    mae_cfg.window_len = 5;
    mae_cfg.latent_dim = 8;
    mae_cfg.enc_blocks = 1;
    mae_cfg.dec_blocks = 1;
    mae_cfg.heads = 2;
    MaeCodec codec = make_mae(mae_cfg, 61);
    const std::string mae_ckpt = dir.str() + "/mae.stpk";
    save_mae_checkpoint(mae_ckpt, codec, {});

    TrainConfig cfg = toy_config(37);
    cfg.latent_bypass = false;
    cfg.epochs = 2;
    TrainedModel model = train(cfg, dir.str(), mae_ckpt);
    REQUIRE(model.mae.has_value());
    CHECK(model.mtd.cfg.latent_dim == 8);

    for (const auto& [path, e] : model.mae->params)
        for (std::size_t i = 0; i < e.grad.numel(); ++i) CHECK(e.grad[i] == 0.0);

    // codec weights must equal the pretrained ones (frozen contract)
    MaeCodec reloaded = load_mae_checkpoint(mae_ckpt);
    for (const auto& [path, e] : reloaded.params) {
        const auto& trained = model.mae->params.at(path);
        CHECK(bit_identical(e.value, trained.value));
    }

    EegEpoch sr = super_resolve(model, pairs[0].lr, 9);
    CHECK(sr.channels() == 16);
    CHECK(sr.data.all_finite());
}
