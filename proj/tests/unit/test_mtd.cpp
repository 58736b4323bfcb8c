#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stadm/grad_check.hpp"
#include "stadm/mtd.hpp"
#include "stadm/transformer.hpp"
#include "test_util.hpp"

using namespace stadm;
using testutil::bit_identical;
using testutil::max_abs_diff;

namespace {

MtdConfig toy_config() {
    MtdConfig cfg;
    cfg.kernels = {3, 5};
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.dim = 8;
    cfg.latent_dim = 4;
    cfg.cond_dim = 8;
    return cfg;
}

void zero_param(ParamStore& ps, const std::string& path) {
    Array& a = ps.value(path);
    for (std::size_t i = 0; i < a.numel(); ++i) a[i] = 0.0;
}

}  // namespace

TEST_CASE("multi-scale width law: scales times filters equals dim") {
    MtdConfig cfg;
    cfg.kernels = {3, 5, 7, 9};
    cfg.dim = 64;
    cfg.latent_dim = 10;
    cfg.heads = 16;
    MtdDenoiser mtd = make_mtd(cfg, 1);
    CHECK(cfg.scale_filters() == 16);

    Rng rng(2);
    Tape tape;
    ParamBinder bind(tape, mtd.params);
    Var z = tape.constant(Array::randn({6, 10}, rng));
    auto h = multi_scale_features_batch(tape, bind, mtd, {z}, NormMode::eval);
    CHECK(h[0].val().rows() == 6);
    CHECK(h[0].val().cols() == 64);
}

TEST_CASE("delta kernels with identity batch norm stack the same projection") {
    MtdConfig cfg;
    cfg.kernels = {3, 5, 7, 9};
    cfg.dim = 8;  // 2 filters per scale
    cfg.latent_dim = 3;
    cfg.heads = 2;
    MtdDenoiser mtd = make_mtd(cfg, 3);

    Rng rng(4);
    Array mix = Array::randn({2, 3}, rng);  // filters x latent channels
    for (std::size_t k : {3, 5, 7, 9}) {
        Array& w = mtd.params.value("conv" + std::to_string(k) + ".weight");
        for (std::size_t i = 0; i < w.numel(); ++i) w[i] = 0.0;
        for (std::size_t f = 0; f < 2; ++f)
            for (std::size_t c = 0; c < 3; ++c)
                w[(f * 3 + c) * k + k / 2] = mix.at(f, c);  // center tap only
    }

    Array z = Array::randn({5, 3}, rng);
    Tape tape;
    ParamBinder bind(tape, mtd.params);
    auto h = multi_scale_features_batch(tape, bind, mtd, {tape.constant(z)}, NormMode::eval);
    const Array& out = h[0].val();
    REQUIRE(out.cols() == 8);

    // oracle: each scale block equals z x mix^T (identity running stats,
    // gain 1, shift 0, eps only rescales)
    const double eps_scale = 1.0 / std::sqrt(1.0 + 1e-5);
    for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t s = 0; s < 4; ++s)
            for (std::size_t f = 0; f < 2; ++f) {
                double expect = 0;
                for (std::size_t c = 0; c < 3; ++c) expect += z.at(r, c) * mix.at(f, c);
                CHECK(out.at(r, s * 2 + f) == doctest::Approx(expect * eps_scale).epsilon(1e-10));
            }
}

TEST_CASE("self-attention block residual identities") {
    MtdConfig cfg = toy_config();
    MtdDenoiser mtd = make_mtd(cfg, 5);
    Rng rng(6);
    Array h = Array::randn({3, 8}, rng);

    SUBCASE("zero output projection reduces to the identity") {
        zero_param(mtd.params, "block0.attn.wo");
        Tape tape;
        ParamBinder bind(tape, mtd.params);
        Var o = self_attention_block(bind, mtd, 0, tape.constant(h));
        CHECK(max_abs_diff(o.val(), h) == 0.0);
    }

    SUBCASE("single token: attention weight is exactly one") {
        Tape tape;
        ParamBinder bind(tape, mtd.params);
        Array single = Array::randn({1, 8}, rng);
        Var o = self_attention_block(bind, mtd, 0, tape.constant(single));
        // expected: token + LN(token) Wv Wo (weights 1 regardless of Q, K)
        Tape t2;
        ParamBinder b2(t2, mtd.params);
        Var ln = layer_norm_rows(t2.constant(single), b2("block0.ln1.gain"),
                                 b2("block0.ln1.shift"));
        Var expect = add(t2.constant(single),
                         matmul(matmul(ln, b2("block0.attn.wv")), b2("block0.attn.wo")));
        CHECK(max_abs_diff(o.val(), expect.val()) < 1e-14);
    }
}

TEST_CASE("self-attention matches a hand-computed 3-token oracle") {
    MtdConfig cfg = toy_config();
    cfg.heads = 1;
    cfg.dim = 4;
    cfg.latent_dim = 4;
    cfg.kernels = {3};
    MtdDenoiser mtd = make_mtd(cfg, 7);
    Rng rng(8);
    Array h = Array::randn({3, 4}, rng);

    Tape tape;
    ParamBinder bind(tape, mtd.params);
    Var o = self_attention_block(bind, mtd, 0, tape.constant(h));

    // oracle with plain loops
    auto& ps = mtd.params;
    const Array& gain = ps.value("block0.ln1.gain");
    const Array& shift = ps.value("block0.ln1.shift");
    Array ln({3, 4});
    for (std::size_t i = 0; i < 3; ++i) {
        double mu = 0, var = 0;
        for (std::size_t j = 0; j < 4; ++j) mu += h.at(i, j);
        mu /= 4;
        for (std::size_t j = 0; j < 4; ++j) var += (h.at(i, j) - mu) * (h.at(i, j) - mu);
        var /= 4;
        for (std::size_t j = 0; j < 4; ++j)
            ln.at(i, j) = (h.at(i, j) - mu) / std::sqrt(var + 1e-5) * gain[j] + shift[j];
    }
    auto matmul_oracle = [](const Array& a, const Array& b) {
        Array c({a.rows(), b.cols()});
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t j = 0; j < b.cols(); ++j) {
                double s = 0;
                for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
                c.at(i, j) = s;
            }
        return c;
    };
    Array q = matmul_oracle(ln, ps.value("block0.attn.wq"));
    Array k = matmul_oracle(ln, ps.value("block0.attn.wk"));
    Array v = matmul_oracle(ln, ps.value("block0.attn.wv"));
    Array scores({3, 3});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double s = 0;
            for (std::size_t d = 0; d < 4; ++d) s += q.at(i, d) * k.at(j, d);
            scores.at(i, j) = s / 2.0;  // sqrt(d_head) = 2
        }
    Array attn({3, 3});
    for (std::size_t i = 0; i < 3; ++i) {
        double mx = std::max({scores.at(i, 0), scores.at(i, 1), scores.at(i, 2)});
        double denom = 0;
        for (std::size_t j = 0; j < 3; ++j) denom += std::exp(scores.at(i, j) - mx);
        for (std::size_t j = 0; j < 3; ++j) attn.at(i, j) = std::exp(scores.at(i, j) - mx) / denom;
    }
    Array expect = matmul_oracle(matmul_oracle(attn, v), ps.value("block0.attn.wo"));
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 4; ++j) expect.at(i, j) += h.at(i, j);

    CHECK(max_abs_diff(o.val(), expect) < 1e-10);
}

TEST_CASE("cross-attention residual and uniform-weight identities") {
    MtdConfig cfg = toy_config();
    MtdDenoiser mtd = make_mtd(cfg, 9);
    Rng rng(10);
    Array o = Array::randn({3, 8}, rng);
    Array cond = Array::randn({5, 8}, rng);

    SUBCASE("zero value projection leaves the FFN path of o") {
        zero_param(mtd.params, "block0.cross.wv");
        Tape tape;
        ParamBinder bind(tape, mtd.params);
        Var fused = cross_attention_block(bind, mtd, 0, tape.constant(o), tape.constant(cond));

        Tape t2;
        ParamBinder b2(t2, mtd.params);
        Var oc = t2.constant(o);
        Var ln = layer_norm_rows(oc, b2("block0.ln2.gain"), b2("block0.ln2.shift"));
        Var f1 = add_rowvec(matmul(ln, b2("block0.ffn.fc1.weight")), b2("block0.ffn.fc1.bias"));
        Var f2 = add_rowvec(matmul(gelu(f1), b2("block0.ffn.fc2.weight")),
                            b2("block0.ffn.fc2.bias"));
        Var expect = add(oc, f2);
        CHECK(max_abs_diff(fused.val(), expect.val()) == 0.0);
    }

    SUBCASE("single condition token gets weight exactly one for any query") {
        Array one_cond = Array::randn({1, 8}, rng);
        Tape tape;
        ParamBinder bind(tape, mtd.params);
        // attention output must equal V row regardless of the queries
        Var q = layer_norm(bind, "block0.cross.lnq",
                           matmul(tape.constant(o), bind("block0.cross.wq")));
        Var k = layer_norm(bind, "block0.cross.lnk",
                           matmul(tape.constant(one_cond), bind("block0.cross.wk")));
        Var v = matmul(tape.constant(one_cond), bind("block0.cross.wv"));
        Var core = attention_core(q, k, v, cfg.heads);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 8; ++j)
                CHECK(core.val().at(i, j) == v.val().at(0, j));
    }
}

TEST_CASE("cross-attention matches a hand-computed 2x2 oracle") {
    MtdConfig cfg;
    cfg.kernels = {3};
    cfg.blocks = 1;
    cfg.heads = 1;
    cfg.dim = 2;
    cfg.latent_dim = 2;
    cfg.cond_dim = 2;
    MtdDenoiser mtd = make_mtd(cfg, 11);
    Rng rng(12);
    Array o = Array::randn({2, 2}, rng);
    Array cond = Array::randn({2, 2}, rng);

    Tape tape;
    ParamBinder bind(tape, mtd.params);
    Var fused = cross_attention_block(bind, mtd, 0, tape.constant(o), tape.constant(cond));

    auto& ps = mtd.params;
    auto mm = [](const Array& a, const Array& b) {
        Array c({a.rows(), b.cols()});
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t j = 0; j < b.cols(); ++j) {
                double s = 0;
                for (std::size_t k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
                c.at(i, j) = s;
            }
        return c;
    };
    auto ln_rows = [&ps](const Array& x, const std::string& prefix) {
        const Array& g = ps.value(prefix + ".gain");
        const Array& s = ps.value(prefix + ".shift");
        Array y({x.rows(), x.cols()});
        for (std::size_t i = 0; i < x.rows(); ++i) {
            double mu = 0, var = 0;
            for (std::size_t j = 0; j < x.cols(); ++j) mu += x.at(i, j);
            mu /= static_cast<double>(x.cols());
            for (std::size_t j = 0; j < x.cols(); ++j)
                var += (x.at(i, j) - mu) * (x.at(i, j) - mu);
            var /= static_cast<double>(x.cols());
            for (std::size_t j = 0; j < x.cols(); ++j)
                y.at(i, j) = (x.at(i, j) - mu) / std::sqrt(var + 1e-5) * g[j] + s[j];
        }
        return y;
    };

    Array q = ln_rows(mm(o, ps.value("block0.cross.wq")), "block0.cross.lnq");
    Array k = ln_rows(mm(cond, ps.value("block0.cross.wk")), "block0.cross.lnk");
    Array v = mm(cond, ps.value("block0.cross.wv"));
    const double inv_sqrt_dk = 1.0 / std::sqrt(2.0);
    Array fused_expect = o;
    for (std::size_t i = 0; i < 2; ++i) {
        double s0 = (q.at(i, 0) * k.at(0, 0) + q.at(i, 1) * k.at(0, 1)) * inv_sqrt_dk;
        double s1 = (q.at(i, 0) * k.at(1, 0) + q.at(i, 1) * k.at(1, 1)) * inv_sqrt_dk;
        const double mx = std::max(s0, s1);
        const double w0 = std::exp(s0 - mx), w1 = std::exp(s1 - mx);
        for (std::size_t j = 0; j < 2; ++j)
            fused_expect.at(i, j) += (w0 * v.at(0, j) + w1 * v.at(1, j)) / (w0 + w1);
    }
    Array ln2 = ln_rows(fused_expect, "block0.ln2");
    Array f1 = mm(ln2, ps.value("block0.ffn.fc1.weight"));
    for (std::size_t i = 0; i < f1.rows(); ++i)
        for (std::size_t j = 0; j < f1.cols(); ++j) {
            const double x = f1.at(i, j) + ps.value("block0.ffn.fc1.bias")[j];
            f1.at(i, j) = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
        }
    Array f2 = mm(f1, ps.value("block0.ffn.fc2.weight"));
    Array expect = fused_expect;
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            expect.at(i, j) += f2.at(i, j) + ps.value("block0.ffn.fc2.bias")[j];

    CHECK(max_abs_diff(fused.val(), expect) < 1e-10);
}

TEST_CASE("predict_noise shape law over the test grid") {
    const std::pair<std::size_t, std::size_t> grid[] = {{4, 8}, {16, 16}, {36, 32}};
    for (auto [tokens, latent] : grid) {
        MtdConfig cfg;
        cfg.kernels = {3, 5};
        cfg.blocks = 2;
        cfg.heads = 4;
        cfg.dim = 16;
        cfg.latent_dim = latent;
        cfg.cond_dim = 16;
        MtdDenoiser mtd = make_mtd(cfg, 13);
        Rng rng(14);
        Array z = Array::randn({tokens, latent}, rng);
        Array cond = condition_with_time(mtd, Array::randn({6, 16}, rng), 5);
        Array eps = predict_noise(mtd, z, 5, cond);
        CHECK(eps.rows() == tokens);
        CHECK(eps.cols() == latent);
        CHECK(eps.all_finite());
    }
}

TEST_CASE("timestep token differentiates otherwise identical inputs") {
    MtdConfig cfg = toy_config();
    MtdDenoiser mtd = make_mtd(cfg, 15);
    // random decoder so outputs are not all zero
    Rng wrng(99);
    Array& dec = mtd.params.value("decoder.weight");
    for (std::size_t i = 0; i < dec.numel(); ++i) dec[i] = 0.1 * wrng.normal();

    Rng rng(16);
    Array z = Array::randn({3, 4}, rng);
    Array base = Array::randn({4, 8}, rng);
    Array a = predict_noise(mtd, z, 3, condition_with_time(mtd, base, 3));
    Array b = predict_noise(mtd, z, 47, condition_with_time(mtd, base, 47));
    CHECK_FALSE(bit_identical(a, b));
}

TEST_CASE("zero-initialized decoder predicts exactly zero") {
    MtdConfig cfg = toy_config();
    MtdDenoiser mtd = make_mtd(cfg, 17);
    Rng rng(18);
    Array z = Array::randn({4, 4}, rng);
    Array cond = condition_with_time(mtd, Array::randn({3, 8}, rng), 2);
    Array eps = predict_noise(mtd, z, 2, cond);
    for (std::size_t i = 0; i < eps.numel(); ++i) CHECK(eps[i] == 0.0);
}

TEST_CASE("block stack is permutation-equivariant over latent tokens") {
    MtdConfig cfg = toy_config();
    MtdDenoiser mtd = make_mtd(cfg, 19);
    Rng rng(20);
    Array h = Array::randn({3, 8}, rng);
    Array cond = Array::randn({4, 8}, rng);
    const std::vector<std::size_t> perm{1, 2, 0};
    Array hp({3, 8});
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t j = 0; j < 8; ++j) hp.at(r, j) = h.at(perm[r], j);

    auto run_stack = [&](const Array& input) {
        Tape tape;
        ParamBinder bind(tape, mtd.params);
        Var o = self_attention_block(bind, mtd, 0, tape.constant(input));
        return cross_attention_block(bind, mtd, 0, o, tape.constant(cond)).val();
    };
    Array out = run_stack(h);
    Array outp = run_stack(hp);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t j = 0; j < 8; ++j)
            CHECK(outp.at(r, j) == doctest::Approx(out.at(perm[r], j)).epsilon(1e-12));
}

TEST_CASE("gradient check through the denoiser loss on a toy") {
    MtdConfig cfg = toy_config();
    Rng rng(21);
    Array z = Array::randn({2, 4}, rng);
    Array eps = Array::randn({2, 4}, rng);
    Array cond_base = Array::randn({3, 8}, rng);

    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        MtdDenoiser mtd = make_mtd(cfg, seed);
        // non-zero decoder so its gradient path is exercised
        Array& dec = mtd.params.value("decoder.weight");
        Rng drng(seed);
        for (std::size_t i = 0; i < dec.numel(); ++i) dec[i] = 0.2 * drng.normal();

        for (auto mode : {NormMode::train, NormMode::eval}) {
            const double worst = grad_check(
                [&](ParamStore& ps, bool wg) {
                    Tape tape;
                    ParamBinder bind(tape, ps);
                    Var c = concat_rows(
                        {tape.constant(cond_base), timestep_token(tape, bind, mtd, 7)});
                    auto out = predict_noise_batch(tape, bind, mtd, {tape.constant(z)}, {c},
                                                   mode);
                    Var loss = mse(out[0], tape.constant(eps));
                    if (wg) {
                        tape.backward(loss);
                        bind.accumulate_grads();
                    }
                    return loss.val()[0];
                },
                mtd.params);
            CHECK(worst < 1e-4);
        }
    }
}
