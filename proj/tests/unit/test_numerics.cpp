#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "stadm/grad_check.hpp"
#include "stadm/param_store.hpp"
#include "stadm/tape.hpp"
#include "test_util.hpp"

using namespace stadm;
using testutil::bit_identical;
using testutil::max_abs_diff;

namespace {

// Objective builder: routes `build`'s output through mse against a fixed
// target so every op can be gradient-checked with the same harness.
double run_objective(ParamStore& ps, bool with_grads, const Array& target,
                     const std::function<Var(Tape&, ParamBinder&)>& build) {
    Tape tape;
    ParamBinder bind(tape, ps);
    Var out = build(tape, bind);
    Var loss = mse(out, tape.constant(target));
    if (with_grads) {
        tape.backward(loss);
        bind.accumulate_grads();
    }
    return loss.val()[0];
}

ScalarFn objective(const Array& target, std::function<Var(Tape&, ParamBinder&)> build) {
    return [&target, build = std::move(build)](ParamStore& ps, bool wg) {
        return run_objective(ps, wg, target, build);
    };
}

}  // namespace

TEST_CASE("matmul identity and zero cases") {
    Tape t;
    Var i2 = t.constant(Array::from({2, 2}, {1, 0, 0, 1}));
    Var m = t.constant(Array::from({2, 2}, {1, 2, 3, 4}));
    CHECK(bit_identical(matmul(i2, m).val(), m.val()));

    Var z = t.constant(Array::zeros({2, 1}));
    CHECK(bit_identical(matmul(i2, z).val(), Array::zeros({2, 1})));
}

TEST_CASE("matmul matches triple-loop oracle") {
    Rng rng(42);
    Array a = Array::randn({3, 4}, rng);
    Array b = Array::randn({4, 2}, rng);
    Array expect({3, 2});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < 4; ++k) s += a.at(i, k) * b.at(k, j);
            expect.at(i, j) = s;
        }
    Tape t;
    Array got = matmul(t.constant(a), t.constant(b)).val();
    CHECK(max_abs_diff(got, expect) < 1e-12);
}

TEST_CASE("matmul rejects inner mismatch") {
    Tape t;
    Var a = t.constant(Array::zeros({2, 3}));
    Var b = t.constant(Array::zeros({2, 3}));
    CHECK_THROWS_AS((void)matmul(a, b), DimensionError);
}

TEST_CASE("conv1d_same sliding-window oracle") {
    Tape t;
    Var x = t.constant(Array::from({1, 4}, {1, 1, 1, 1}));
    Var w = t.constant(Array::from({1, 1, 3}, {1, 1, 1}));
    Var b = t.constant(Array::zeros({1}));
    Array got = conv1d_same(x, w, b).val();
    CHECK(max_abs_diff(got, Array::from({1, 4}, {2, 3, 3, 2})) == 0.0);
}

TEST_CASE("conv1d_same delta kernel is the identity") {
    Rng rng(7);
    for (std::size_t kw : {std::size_t{3}, std::size_t{5}, std::size_t{9}}) {
        Array x = Array::randn({2, 13}, rng);
        Array w = Array::zeros({2, 2, kw});
        // one delta filter per input channel
        w[(0 * 2 + 0) * kw + kw / 2] = 1.0;
        w[(1 * 2 + 1) * kw + kw / 2] = 1.0;
        Tape t;
        Array got = conv1d_same(t.constant(x), t.constant(w), t.constant(Array::zeros({2}))).val();
        CHECK(bit_identical(got, x));
    }
}

TEST_CASE("conv1d_same zero kernel leaves only the bias") {
    Tape t;
    Rng rng(9);
    Var x = t.constant(Array::randn({3, 8}, rng));
    Var w = t.constant(Array::zeros({2, 3, 5}));
    Var b = t.constant(Array::from({2}, {1.5, -2.0}));
    Array got = conv1d_same(x, w, b).val();
    for (std::size_t n = 0; n < 8; ++n) {
        CHECK(got.at(0, n) == 1.5);
        CHECK(got.at(1, n) == -2.0);
    }
}

TEST_CASE("conv1d_same rejects even kernel width") {
    Tape t;
    Var x = t.constant(Array::zeros({1, 4}));
    Var w = t.constant(Array::zeros({1, 1, 4}));
    Var b = t.constant(Array::zeros({1}));
    CHECK_THROWS_AS((void)conv1d_same(x, w, b), ConfigError);
}

TEST_CASE("conv1d_same handles sequences shorter than the kernel") {
    Tape t;
    Var x = t.constant(Array::from({1, 2}, {1, 2}));
    Var w = t.constant(Array::from({1, 1, 9}, {0, 0, 0, 0, 1, 0, 0, 0, 0}));
    Var b = t.constant(Array::zeros({1}));
    Array got = conv1d_same(x, w, b).val();
    CHECK(bit_identical(got, Array::from({1, 2}, {1, 2})));
}

TEST_CASE("softmax rows: symmetry, overflow safety, oracle") {
    Tape t;
    Array out = softmax_rows(t.constant(Array::from({1, 3}, {0, 0, 0}))).val();
    for (std::size_t j = 0; j < 3; ++j) CHECK(out[j] == doctest::Approx(1.0 / 3).epsilon(1e-14));

    Array big = softmax_rows(t.constant(Array::from({1, 2}, {1000, 0}))).val();
    CHECK(big.all_finite());
    CHECK(big[0] == doctest::Approx(1.0));
    CHECK(big[1] == doctest::Approx(0.0));

    Array x = Array::from({1, 3}, {1, 2, 3});
    Array got = softmax_rows(t.constant(x)).val();
    double denom = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    for (std::size_t j = 0; j < 3; ++j)
        CHECK(std::fabs(got[j] - std::exp(x[j]) / denom) < 1e-12);
}

TEST_CASE("softmax row sums stay within 1e-12 up to magnitude 1e6") {
    Rng rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        Array x = Array::randn({4, 7}, rng, 1e6);
        Tape t;
        Array y = softmax_rows(t.constant(x)).val();
        for (std::size_t i = 0; i < 4; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < 7; ++j) {
                s += y.at(i, j);
                CHECK(y.at(i, j) >= 0.0);
            }
            CHECK(std::fabs(s - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("layer_norm_rows closed-form cases") {
    Tape t;
    Var gain = t.constant(Array::full({3}, 1.0));
    Var shift = t.constant(Array::zeros({3}));
    Array c = layer_norm_rows(t.constant(Array::full({2, 3}, 5.0)), gain, shift).val();
    CHECK(max_abs_diff(c, Array::zeros({2, 3})) == 0.0);

    Var g2 = t.constant(Array::full({2}, 1.0));
    Var s2 = t.constant(Array::zeros({2}));
    Array two = layer_norm_rows(t.constant(Array::from({1, 2}, {-1, 1})), g2, s2).val();
    const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(two[0] == doctest::Approx(-expect).epsilon(1e-12));
    CHECK(two[1] == doctest::Approx(expect).epsilon(1e-12));

    Rng rng(3);
    Var g0 = t.constant(Array::zeros({4}));
    Var sc = t.constant(Array::full({4}, 2.5));
    Array r = layer_norm_rows(t.constant(Array::randn({2, 4}, rng)), g0, sc).val();
    CHECK(max_abs_diff(r, Array::full({2, 4}, 2.5)) == 0.0);
}

TEST_CASE("layer_norm_rows rejects single-column input") {
    Tape t;
    Var g = t.constant(Array::full({1}, 1.0));
    Var s = t.constant(Array::zeros({1}));
    CHECK_THROWS_AS((void)layer_norm_rows(t.constant(Array::zeros({3, 1})), g, s), ConfigError);
}

TEST_CASE("batch_norm_feature forward behavior") {
    Array rm = Array::zeros({1});
    Array rv = Array::full({1}, 1.0);

    SUBCASE("identical rows normalize to zero in train mode") {
        Tape t;
        Var g = t.constant(Array::full({1}, 1.0));
        Var s = t.constant(Array::zeros({1}));
        Array out = batch_norm_feature(t.constant(Array::full({4, 1}, 3.0)), g, s,
                                       NormMode::train, rm, rv)
                        .val();
        CHECK(max_abs_diff(out, Array::zeros({4, 1})) == 0.0);
        CHECK(rm[0] == doctest::Approx(0.3));  // momentum 0.1 toward batch mean 3
    }

    SUBCASE("eval mode with unit stats is an affine map") {
        Tape t;
        Var g = t.constant(Array::full({1}, 1.0));
        Var s = t.constant(Array::zeros({1}));
        Array x = Array::from({3, 1}, {-1, 0, 2});
        Array out = batch_norm_feature(t.constant(x), g, s, NormMode::eval, rm, rv).val();
        for (std::size_t i = 0; i < 3; ++i)
            CHECK(out[i] == doctest::Approx(x[i] / std::sqrt(1.0 + 1e-5)).epsilon(1e-12));
    }

    SUBCASE("two-row batch normalizes to +-1") {
        Tape t;
        Var g = t.constant(Array::full({1}, 1.0));
        Var s = t.constant(Array::zeros({1}));
        Array out = batch_norm_feature(t.constant(Array::from({2, 1}, {0, 2})), g, s,
                                       NormMode::train, rm, rv)
                        .val();
        CHECK(out[0] == doctest::Approx(-1.0).epsilon(1e-4));
        CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-4));
    }

    SUBCASE("single row in train mode is a config error") {
        Tape t;
        Var g = t.constant(Array::full({1}, 1.0));
        Var s = t.constant(Array::zeros({1}));
        CHECK_THROWS_AS((void)batch_norm_feature(t.constant(Array::zeros({1, 1})), g, s,
                                                 NormMode::train, rm, rv),
                        ConfigError);
    }
}

TEST_CASE("grad_check: sum of squares and constant objectives") {
    Rng rng(5);
    ParamStore ps;
    ps.create("w", Array::randn({3, 4}, rng));

    ScalarFn sum_sq = [](ParamStore& p, bool wg) {
        Tape tape;
        ParamBinder bind(tape, p);
        Var w = bind("w");
        Var loss = scale(mse(w, tape.constant(Array::zeros({3, 4}))), 12.0);
        if (wg) {
            tape.backward(loss);
            bind.accumulate_grads();
        }
        return loss.val()[0];
    };
    CHECK(grad_check(sum_sq, ps) < 1e-7);

    ScalarFn constant = [](ParamStore& p, bool wg) {
        Tape tape;
        ParamBinder bind(tape, p);
        (void)bind("w");
        Var loss = mse(tape.constant(Array::zeros({1, 1})), tape.constant(Array::zeros({1, 1})));
        if (wg) {
            tape.backward(loss);
            bind.accumulate_grads();
        }
        return loss.val()[0];
    };
    ps.zero_grads();
    CHECK(grad_check(constant, ps) == 0.0);
    for (std::size_t i = 0; i < ps.at("w").grad.numel(); ++i) CHECK(ps.at("w").grad[i] == 0.0);
}

TEST_CASE("grad_check passes for every differentiable op over 20 seeds") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);

        SUBCASE("") {}  // keep doctest quiet about empty case lists

        {
            ParamStore ps;
            ps.create("a", Array::randn({3, 4}, rng));
            ps.create("b", Array::randn({4, 2}, rng));
            Array target = Array::randn({3, 2}, rng);
            auto f = objective(target, [](Tape&, ParamBinder& bind) {
                return matmul(bind("a"), bind("b"));
            });
            CHECK(grad_check(f, ps) < 1e-4);
        }
        {
            ParamStore ps;
            ps.create("x", Array::randn({2, 6}, rng));
            ps.create("w", Array::randn({3, 2, 3}, rng));
            ps.create("b", Array::randn({3}, rng));
            Array target = Array::randn({3, 6}, rng);
            auto f = objective(target, [](Tape&, ParamBinder& bind) {
                return conv1d_same(bind("x"), bind("w"), bind("b"));
            });
            CHECK(grad_check(f, ps) < 1e-4);
        }
        {
            ParamStore ps;
            ps.create("x", Array::randn({3, 5}, rng));
            Array target = Array::randn({3, 5}, rng);
            auto f = objective(target, [](Tape&, ParamBinder& bind) {
                return softmax_rows(bind("x"));
            });
            CHECK(grad_check(f, ps) < 1e-4);
        }
        {
            ParamStore ps;
            ps.create("x", Array::randn({4, 5}, rng));
            ps.create("g", Array::randn({5}, rng));
            ps.create("s", Array::randn({5}, rng));
            Array target = Array::randn({4, 5}, rng);
            auto f = objective(target, [](Tape&, ParamBinder& bind) {
                return layer_norm_rows(bind("x"), bind("g"), bind("s"));
            });
            CHECK(grad_check(f, ps) < 1e-4);
        }
        {
            ParamStore ps;
            ps.create("x", Array::randn({6, 3}, rng));
            ps.create("g", Array::randn({3}, rng));
            ps.create("s", Array::randn({3}, rng));
            Array target = Array::randn({6, 3}, rng);
            Array rm = Array::zeros({3});
            Array rv = Array::full({3}, 1.0);
            auto ftrain = [&target, &rm, &rv](ParamStore& p, bool wg) {
                return run_objective(p, wg, target, [&rm, &rv](Tape&, ParamBinder& bind) {
                    return batch_norm_feature(bind("x"), bind("g"), bind("s"), NormMode::train,
                                              rm, rv);
                });
            };
            CHECK(grad_check(ftrain, ps) < 1e-4);
            auto feval = [&target, &rm, &rv](ParamStore& p, bool wg) {
                return run_objective(p, wg, target, [&rm, &rv](Tape&, ParamBinder& bind) {
                    return batch_norm_feature(bind("x"), bind("g"), bind("s"), NormMode::eval,
                                              rm, rv);
                });
            };
            CHECK(grad_check(feval, ps) < 1e-4);
        }
        {
            ParamStore ps;
            ps.create("a", Array::randn({2, 7}, rng));
            ps.create("b", Array::randn({2, 7}, rng));
            Array target = Array::randn({2, 7}, rng);
            auto f = objective(target, [](Tape&, ParamBinder& bind) {
                return mul(add(bind("a"), bind("b")), sub(bind("a"), bind("b")));
            });
            CHECK(grad_check(f, ps) < 1e-4);
        }
        {
            ParamStore ps;
            ps.create("x", Array::randn({3, 6}, rng));
            Array target = Array::randn({3, 6}, rng);
            auto frelu = objective(target, [](Tape&, ParamBinder& bind) { return relu(bind("x")); });
            CHECK(grad_check(frelu, ps) < 1e-3);  // kink tolerance; points near 0 are rare
            auto fgelu = objective(target, [](Tape&, ParamBinder& bind) { return gelu(bind("x")); });
            CHECK(grad_check(fgelu, ps) < 1e-4);
        }
        {
            ParamStore ps;
            ps.create("a", Array::randn({2, 3}, rng));
            ps.create("b", Array::randn({3, 3}, rng));
            Array target = Array::randn({5, 3}, rng);
            auto f = objective(target, [](Tape&, ParamBinder& bind) {
                return concat_rows({bind("a"), bind("b")});
            });
            CHECK(grad_check(f, ps) < 1e-4);
        }
        {
            ParamStore ps;
            ps.create("a", Array::randn({3, 2}, rng));
            ps.create("b", Array::randn({3, 4}, rng));
            Array target = Array::randn({3, 6}, rng);
            auto f = objective(target, [](Tape&, ParamBinder& bind) {
                return concat_cols({bind("a"), bind("b")});
            });
            CHECK(grad_check(f, ps) < 1e-4);
        }
        {
            ParamStore ps;
            ps.create("x", Array::randn({5, 3}, rng));
            Array target = Array::randn({4, 3}, rng);
            auto f = objective(target, [](Tape&, ParamBinder& bind) {
                return rows_select(bind("x"), {0, 2, 2, 4});  // duplicate index on purpose
            });
            CHECK(grad_check(f, ps) < 1e-4);
        }
        {
            ParamStore ps;
            ps.create("x", Array::randn({6, 3}, rng));
            Array target = Array::randn({2, 3}, rng);
            auto f = objective(target, [](Tape&, ParamBinder& bind) {
                return slice_rows(bind("x"), 2, 2);
            });
            CHECK(grad_check(f, ps) < 1e-4);
        }
        {
            ParamStore ps;
            ps.create("x", Array::randn({4, 3}, rng));
            Array target = Array::randn({3, 4}, rng);
            auto f = objective(target, [](Tape&, ParamBinder& bind) {
                return transpose(bind("x"));
            });
            CHECK(grad_check(f, ps) < 1e-4);
        }
        {
            ParamStore ps;
            ps.create("x", Array::randn({4, 3}, rng));
            ps.create("r", Array::randn({3}, rng));
            Array target = Array::randn({4, 3}, rng);
            auto f = objective(target, [](Tape&, ParamBinder& bind) {
                return scale(add_rowvec(bind("x"), bind("r")), 1.7);
            });
            CHECK(grad_check(f, ps) < 1e-4);
        }
        {
            ParamStore ps;
            ps.create("a", Array::randn({3, 3}, rng));
            ps.create("b", Array::randn({3, 3}, rng));
            ScalarFn f = [](ParamStore& p, bool wg) {
                Tape tape;
                ParamBinder bind(tape, p);
                Var loss = mse(bind("a"), bind("b"));
                if (wg) {
                    tape.backward(loss);
                    bind.accumulate_grads();
                }
                return loss.val()[0];
            };
            CHECK(grad_check(f, ps) < 1e-4);
        }
    }
}

TEST_CASE("forward ops are deterministic") {
    auto run = [] {
        Rng rng(123);
        Tape t;
        Var x = t.constant(Array::randn({5, 6}, rng));
        Var w = t.constant(Array::randn({6, 6}, rng));
        Var g = t.constant(Array::full({6}, 1.0));
        Var s = t.constant(Array::zeros({6}));
        return layer_norm_rows(gelu(matmul(softmax_rows(x), w)), g, s).val();
    };
    CHECK(bit_identical(run(), run()));
}

TEST_CASE("ParamStore rejects duplicate paths") {
    ParamStore ps;
    ps.create("w", Array::zeros({2}));
    CHECK_THROWS_AS(ps.create("w", Array::zeros({2})), ConfigError);
}

TEST_CASE("Adam reduces a quadratic objective") {
    Rng rng(77);
    ParamStore ps;
    ps.create("w", Array::randn({4, 4}, rng));
    AdamOptimizer opt(0.05);
    double first = 0, last = 0;
    for (int step = 0; step < 200; ++step) {
        ps.zero_grads();
        Tape tape;
        ParamBinder bind(tape, ps);
        Var loss = mse(bind("w"), tape.constant(Array::full({4, 4}, 2.0)));
        tape.backward(loss);
        bind.accumulate_grads();
        if (step == 0) first = loss.val()[0];
        last = loss.val()[0];
        opt.step(ps);
    }
    CHECK(last < 0.01 * first);
}
