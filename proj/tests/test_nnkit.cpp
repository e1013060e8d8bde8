#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "darf/nnkit/checkpoint.hpp"
#include "darf/nnkit/gradcheck.hpp"
#include "darf/nnkit/layers.hpp"
#include "darf/nnkit/optim.hpp"
#include "support/nnkit_oracles.hpp"

using namespace darf;
using namespace darf::nn;
using namespace darf::oracle::nnk;

TEST(Linear, IdentityWeights) {
    Tape<double> tp(false);
    auto y = ops::linear(tp, tp.constant(Tensor<double>({1, 2}, {1, 2})), tp.constant(Tensor<double>({2, 2}, {1, 0, 0, 1})),
                         tp.constant(Tensor<double>({2}, {0, 0})));
    EXPECT_EQ(tp.value(y), Tensor<double>({1, 2}, {1, 2}));
}

TEST(Linear, HandMatrixMultiply) {
    Tape<double> tp(false);
    auto y = ops::linear(tp, tp.constant(Tensor<double>({1, 2}, {1, 1})), tp.constant(Tensor<double>({2, 2}, {2, 3, 4, 5})),
                         tp.constant(Tensor<double>({2}, {1, 1})));
    EXPECT_EQ(tp.value(y), Tensor<double>({1, 2}, {7, 9}));
}

TEST(Linear, ShapeContract) {
    Rng rng(1);
    Linear<float> lin("l", 16, 32, rng);
    Tape<float> tp(false);
    auto y = lin(tp, tp.constant(Tensor<float>({8, 16})));
    EXPECT_EQ(tp.shape(y), (Shape{8, 32}));
}

TEST(Linear, MismatchReportsBothShapes) {
    Tape<double> tp(false);
    try {
        ops::linear(tp, tp.constant(Tensor<double>({3, 5})), tp.constant(Tensor<double>({4, 2})));
        FAIL() << "expected DimensionError";
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("(3, 5)"), std::string::npos) << msg;
        EXPECT_NE(msg.find("(4, 2)"), std::string::npos) << msg;
    }
}

TEST(Film, ZeroProjectionIsIdentity) {
    Rng rng(2);
    FilmProj<double> proj("f", 6, 4, rng);
    Tape<double> tp(false);
    auto h = random_tensor<double>({2, 3, 4}, rng);
    auto y = film_modulate(tp, tp.constant(h), tp.constant(random_tensor<double>({2, 6}, rng)), proj);
    EXPECT_EQ(tp.value(y), h);
}

TEST(Film, UnitGammaDoubles) {
    Rng rng(3);
    FilmProj<double> proj("f", 5, 4, rng);
    proj.gamma.bias.value.fill(1.0);
    Tape<double> tp(false);
    auto h = random_tensor<double>({2, 3, 4}, rng);
    auto y = film_modulate(tp, tp.constant(h), tp.constant(random_tensor<double>({2, 5}, rng)), proj);
    for (std::size_t i = 0; i < h.size(); ++i) EXPECT_EQ(tp.value(y)[i], 2.0 * h[i]);
}

TEST(Film, HandComputedSingleItem) {
    // h (1, 1, 2) = [0.5, -2]; e = [2]; γ = e·[0.25, -0.5] + [0, 0.1]; β = e·[1, 0] + [0, 3]
    Rng rng(4);
    FilmProj<double> proj("f", 1, 2, rng);
    proj.gamma.weight.value = Tensor<double>({1, 2}, {0.25, -0.5});
    proj.gamma.bias.value = Tensor<double>({2}, {0.0, 0.1});
    proj.beta.weight.value = Tensor<double>({1, 2}, {1.0, 0.0});
    proj.beta.bias.value = Tensor<double>({2}, {0.0, 3.0});
    Tape<double> tp(false);
    auto y = film_modulate(tp, tp.constant(Tensor<double>({1, 1, 2}, {0.5, -2.0})),
                           tp.constant(Tensor<double>({1, 1}, {2.0})), proj);
    // channel 0: γ = 0.5, β = 2  -> 0.5·1.5 + 2 = 2.75
    // channel 1: γ = -0.9, β = 3 -> -2·0.1 + 3 = 2.8
    EXPECT_NEAR(tp.value(y)[0], 2.75, 1e-15);
    EXPECT_NEAR(tp.value(y)[1], 2.8, 1e-15);
}

TEST(Film, BatchMismatch) {
    Rng rng(5);
    FilmProj<double> proj("f", 3, 4, rng);
    Tape<double> tp(false);
    EXPECT_THROW(film_modulate(tp, tp.constant(Tensor<double>({2, 3, 4})), tp.constant(Tensor<double>({3, 3})), proj),
                 DimensionError);
}

TEST(Backward, SumOfLinearGivesOuterProductStructure) {
    Rng rng(6);
    Parameter<double> w("w", random_tensor<double>({3, 2}, rng));
    const auto x = random_tensor<double>({4, 3}, rng);
    Tape<double> tp;
    tp.backward(ops::sum(tp, ops::linear(tp, tp.constant(x), tp.parameter(w))));
    // ∂/∂w_ij Σ_r Σ_j' x_ri w_ij' = Σ_r x_ri
    for (std::size_t i = 0; i < 3; ++i) {
        double col = 0;
        for (std::size_t r = 0; r < 4; ++r) col += x.at(r, i);
        for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(w.grad.at(i, j), col, 1e-14);
    }
}

TEST(Backward, UnreachableParameterHasZeroGrad) {
    Rng rng(7);
    Parameter<double> used("used", random_tensor<double>({3}, rng));
    Parameter<double> unused("unused", random_tensor<double>({3}, rng));
    Tape<double> tp;
    tp.parameter(unused);
    tp.backward(ops::sum(tp, tp.parameter(used)));
    for (double g : unused.grad.data()) EXPECT_EQ(g, 0.0);
    for (double g : used.grad.data()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SecondCallIsStale) {
    Parameter<double> p("p", Tensor<double>({2}, {1, 2}));
    Tape<double> tp;
    auto loss = ops::sum(tp, tp.parameter(p));
    tp.backward(loss);
    EXPECT_THROW(tp.backward(loss), StaleGraphError);
}

// ---------------------------------------------------------------------------
// Finite-difference sweep: every op in the vocabulary, many random shapes.

TEST(GradCheck, EveryOpDoublePrecision) {
    Rng rng(2024);
    int cases = 0;
    double worst = 0;
    for (int rep = 0; rep < 9; ++rep)
        for (int op = 0; op < 14; ++op, ++cases) {
            const double e = check_op_case<double>(op, rng, 1e-6);
            worst = std::max(worst, e);
            EXPECT_LT(e, 1e-6) << "op " << op << " rep " << rep;
        }
    EXPECT_GE(cases, 100);
    RecordProperty("worst_rel_error", std::to_string(worst));
}

TEST(GradCheck, EveryOpSinglePrecision) {
    Rng rng(77);
    for (int rep = 0; rep < 8; ++rep)
        for (int op = 0; op < 14; ++op) EXPECT_LT(check_op_case<float>(op, rng, 1e-2), 1e-3) << "op " << op;
}

// ---------------------------------------------------------------------------

TEST(AdamW, ZeroGradZeroDecayLeavesValue) {
    Parameter<double> p("p", Tensor<double>({3}, {1.5, -2.0, 0.25}));
    AdamW<double> opt;
    opt.weight_decay = 0;
    opt.update({&p}, 0.1);
    EXPECT_EQ(p.value, Tensor<double>({3}, {1.5, -2.0, 0.25}));
    EXPECT_EQ(opt.step, 1u);
}

TEST(AdamW, FirstStepBiasCorrected) {
    Parameter<double> p("p", Tensor<double>({1}, {0.0}));
    p.grad[0] = 1.0;
    AdamW<double> opt;
    opt.weight_decay = 0;
    opt.update({&p}, 0.1);
    // m̂ = 1, v̂ = 1 -> Δ = −0.1 / (1 + 1e-8)
    EXPECT_NEAR(p.value[0], -0.1 / (1.0 + 1e-8), 1e-16);
    EXPECT_NEAR(p.value[0], -0.09999999, 1e-8);
    EXPECT_EQ(p.grad[0], 1.0);  // caller zeroes
}

TEST(AdamW, DecoupledDecayOnly) {
    Parameter<float> p("p", Tensor<float>({2}, {3.0f, -1.0f}));
    AdamW<float> opt;
    opt.weight_decay = 0.01;
    opt.update({&p}, 0.1);
    const float f = static_cast<float>(1.0 - 0.1 * 0.01);
    EXPECT_EQ(p.value[0], 3.0f * f);
    EXPECT_EQ(p.value[1], -1.0f * f);
}

TEST(AdamW, NoDecayMatchesPlainAdam) {
    Rng rng(9);
    Parameter<double> p("p", random_tensor<double>({5}, rng));
    std::vector<double> ref(p.value.data().begin(), p.value.data().end()), m(5, 0), v(5, 0);
    AdamW<double> opt;
    opt.weight_decay = 0;
    for (int t = 1; t <= 20; ++t) {
        for (std::size_t i = 0; i < 5; ++i) p.grad[i] = rng.normal();
        opt.update({&p}, 0.01);
        for (std::size_t i = 0; i < 5; ++i) {  // textbook Adam
            const double g = p.grad[i];
            const double b1 = 0.9, b2 = 0.999;
            m[i] = b1 * m[i] + (1 - b1) * g;
            v[i] = b2 * v[i] + (1 - b2) * g * g;
            const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
            ref[i] = ref[i] - 0.01 * mh / (std::sqrt(vh) + 1e-8);
        }
        for (std::size_t i = 0; i < 5; ++i) ASSERT_EQ(p.value[i], ref[i]);
    }
}

TEST(AdamW, NonFiniteGradientAbortsWithName) {
    Parameter<double> a("block/a", Tensor<double>({2}, {1, 2}));
    Parameter<double> b("block/b", Tensor<double>({1}, {3}));
    a.grad[0] = 0.5;
    b.grad[0] = std::nan("");
    AdamW<double> opt;
    try {
        opt.update({&a, &b}, 0.1);
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("block/b"), std::string::npos);
    }
    EXPECT_EQ(a.value, Tensor<double>({2}, {1, 2}));
    EXPECT_EQ(opt.step, 0u);
}

TEST(Ema, ZeroMomentumTracksValue) {
    Parameter<double> p("p", Tensor<double>({1}, {4.0}));
    Ema<double> ema;
    ema.momentum = 0;
    ema.shadow = {Tensor<double>({1}, {-7.0})};
    ema.update({&p});
    EXPECT_EQ(ema.shadow[0][0], 4.0);
}

TEST(Ema, HalfMomentumTwoUpdates) {
    Parameter<double> p("p", Tensor<double>({1}, {1.0}));
    Ema<double> ema;
    ema.momentum = 0.5;
    ema.shadow = {Tensor<double>({1}, {0.0})};
    ema.update({&p});
    ema.update({&p});
    EXPECT_EQ(ema.shadow[0][0], 0.75);
}

TEST(Ema, DefaultMomentumAndFirstCallCopies) {
    Ema<float> ema;
    EXPECT_EQ(ema.momentum, 0.9999);
    Parameter<float> p("p", Tensor<float>({2}, {1.f, 2.f}));
    ema.update({&p});
    EXPECT_EQ(ema.shadow[0], p.value);
}

TEST(Ema, ShadowIsConvexCombinationOfHistory) {
    Rng rng(10);
    for (double mu : {0.3, 0.9, 0.99}) {
        Parameter<double> p("p", Tensor<double>({1}, {rng.normal()}));
        Ema<double> ema;
        ema.momentum = mu;
        double lo = p.value[0], hi = p.value[0];
        for (int i = 0; i < 200; ++i) {
            ema.update({&p});
            ASSERT_GE(ema.shadow[0][0], lo - 1e-15);
            ASSERT_LE(ema.shadow[0][0], hi + 1e-15);
            p.value[0] = rng.normal() * 3;
            lo = std::min(lo, p.value[0]);
            hi = std::max(hi, p.value[0]);
        }
    }
}

TEST(LrSchedule, WarmupStart) {
    LrSchedule s;
    s.warmup_steps = 100;
    EXPECT_DOUBLE_EQ(s(0), 1e-4 / 100);
}

TEST(LrSchedule, BaseAfterWarmup) {
    LrSchedule s;
    s.warmup_steps = 10;
    EXPECT_EQ(s(10), 1e-4);
    EXPECT_EQ(s(5000), 1e-4);
}

TEST(LrSchedule, PlateausClampAtMinimum) {
    LrSchedule s;
    s.warmup_steps = 1;
    s.plateau_patience = 2;
    double lr = 0;
    for (std::size_t step = 1; step < 500; ++step) {
        lr = s(step, 1.0);  // never improves after the first evaluation
        ASSERT_GE(lr, s.min_lr);
        ASSERT_LE(lr, s.base_lr);
    }
    EXPECT_EQ(lr, 1e-6);
}

TEST(LrSchedule, ImprovementKeepsRate) {
    LrSchedule s;
    s.warmup_steps = 1;
    s.plateau_patience = 2;
    for (std::size_t step = 1; step < 50; ++step) EXPECT_EQ(s(step, 1.0 / static_cast<double>(step)), 1e-4);
}

TEST(Checkpoint, LayoutAndRoundTrip) {
    Rng rng(11);
    Linear<float> lin("enc/dense", 3, 2, rng);
    ParamList<float> ps;
    lin.collect(ps);
    std::vector<NamedTensor> recs;
    append_params(recs, ps);
    append_shadow(recs, ps, std::vector<Tensor<float>>{lin.weight.value, lin.bias.value});
    const auto path = std::filesystem::temp_directory_path() / "darf_ckpt_test.darf";
    save_checkpoint(path, recs);

    std::ifstream is(path, std::ios::binary);
    char magic[4];
    is.read(magic, 4);
    EXPECT_EQ(std::string(magic, 4), "DARF");
    EXPECT_EQ(io::get<std::uint32_t>(is), 1u);
    EXPECT_EQ(io::get<std::uint16_t>(is), std::string("enc/dense/weight").size());

    const auto back = load_checkpoint(path);
    ASSERT_EQ(back.size(), 4u);
    EXPECT_EQ(back[2].name, "ema/enc/dense/weight");
    Linear<float> other("enc/dense", 3, 2, rng);
    ParamList<float> ps2;
    other.collect(ps2);
    load_params(ps2, back, "ema/");
    EXPECT_EQ(other.weight.value, lin.weight.value);
    std::filesystem::remove(path);
}

TEST(Determinism, ForwardIsBitwiseRepeatable) {
    Rng rng(12);
    Conv1d<float> conv = Conv1d<float>::same("c", 8, 8, 3, rng);
    auto x = random_tensor<float>({4, 10, 8}, rng);
    auto run = [&] {
        Tape<float> tp(false);
        auto h = ops::silu(tp, ops::group_norm(tp, conv(tp, tp.constant(x)), 2));
        return tp.value(h);
    };
    EXPECT_EQ(run(), run());
}
