#include <gtest/gtest.h>

#include <filesystem>

#include "darf/codec/codec.hpp"
#include "darf/nnkit/gradcheck.hpp"
#include "support/codec_oracles.hpp"

using namespace darf;
using namespace darf::codec;
using namespace darf::oracle::cod;

TEST(Encode, TenSecondBufferGivesTenFrames) {
    CodecModel<float> m;
    synth::AudioBuffer a;
    a.samples.assign(40960, 0.25f);
    const auto z = encode(a, m);
    EXPECT_EQ(z.frames(), 10u);
    EXPECT_EQ(z.values.shape(), (nn::Shape{10, 64}));
    EXPECT_EQ(a.samples.size() / z.values.size(), 64u);  // compression ratio
}

TEST(Encode, ZeroAudioZeroBiasGivesZeroLatents) {
    CodecModel<float> m;
    synth::AudioBuffer a;
    a.samples.assign(8192, 0.0f);
    const auto z = encode(a, m);
    for (float v : z.values.data()) EXPECT_EQ(v, 0.0f);
}

TEST(Encode, RangeStrictlyInsideUnitIntervalForExtremeInputs) {
    CodecModel<float> m;
    synth::AudioBuffer a;
    Rng rng(3);
    for (double amp : {1.0, 1e3, 1e8}) {
        a.samples.resize(4096);
        for (auto& v : a.samples) v = static_cast<float>(amp * rng.normal());
        const auto z = encode(a, m);
        EXPECT_TRUE(z.in_range()) << "amplitude " << amp;
    }
}

TEST(Encode, NonDivisibleLengthRequiresPadding) {
    CodecModel<float> m;
    synth::AudioBuffer a;
    a.samples.assign(4095, 0.0f);
    EXPECT_THROW(encode(a, m), DataError);
}

TEST(Encode, Deterministic) {
    CodecModel<float> m1, m2;
    const auto a = tone_batch(2, 2, 1);
    EXPECT_EQ(encode_batch(m1, a), encode_batch(m2, a));
}

TEST(Decode, OutputLengthAndClamp) {
    CodecModel<float> m;
    LatentSequence z(nn::Tensor<float>(nn::Shape{10, 64}, 0.3f));
    const auto a = decode(z, m, m.cfg.t_max, 4);
    EXPECT_EQ(a.samples.size(), 40960u);
    for (float v : a.samples) {
        EXPECT_LE(v, 1.0f);
        EXPECT_GE(v, -1.0f);
    }
}

TEST(Decode, BoundaryConditionIsExactAtTmin) {
    CodecModel<float> m;
    nn::Tensor<float> x(nn::Shape{1, kPositions, kPatch}), z(nn::Shape{1, 1, kChannels}, 0.5f);
    Rng rng(8);
    for (auto& v : x.data()) v = static_cast<float>(rng.normal());
    nn::Tape<float> tp(false);
    const auto y = tp.value(m.consistency_fn(tp, tp.constant(x), {m.cfg.t_min}, tp.constant(z)));
    EXPECT_EQ(y, x);
}

TEST(BoundaryCheck, FreshModelWithinRounding) {
    CodecModel<float> m;
    EXPECT_LT(boundary_check(m, 5), 1e-6);
}

TEST(BoundaryCheck, AblatedSkipScalingDeviates) {
    CodecConfig c;
    c.boundary_scaling = false;
    CodecModel<float> m(c);
    EXPECT_GT(boundary_check(m, 3), 1e-3);
}

TEST(BoundaryCheck, SkipScalingEndpoints) {
    CodecModel<double> m(tiny());
    EXPECT_EQ(m.c_skip(m.cfg.t_min), 1.0);
    EXPECT_EQ(m.c_out(m.cfg.t_min), 0.0);
    EXPECT_LT(m.c_skip(m.cfg.t_max), 1e-4);
}

TEST(ConsistencyLoss, DegeneratePairIsZero) {
    CodecModel<double> student(tiny()), teacher(tiny());
    const auto audio = nn::cast<double>(tone_batch(2, 1, 2));
    nn::Tensor<double> noise(nn::Shape{2, kPositions, kPatch});
    Rng rng(1);
    for (auto& v : noise.data()) v = rng.normal();
    nn::Tape<double> tp(false);
    const auto l = tp.value(consistency_loss(tp, student, teacher, audio, {0.7, 3.0}, {0.7, 3.0}, noise));
    EXPECT_EQ(l[0], 0.0);
}

TEST(ConsistencyLoss, GradientMatchesFiniteDifferences) {
    CodecModel<double> student(tiny()), teacher(tiny());
    const auto audio = nn::cast<double>(tone_batch(1, 1, 5));
    nn::Tensor<double> noise(nn::Shape{1, kPositions, kPatch});
    Rng rng(2);
    for (auto& v : noise.data()) v = rng.normal();
    // Perturb teacher so the loss is not at a stationary point.
    for (auto* p : teacher.params())
        for (auto& v : p->value.data()) v += 0.05 * rng.normal();
    auto ps = student.params();
    nn::ParamList<double> subset{ps[3], ps[5], ps[9], ps[11], ps.back()};  // biases along the whole path
    const auto r = nn::grad_check<double>(subset, [&](nn::Tape<double>& tp) {
        return consistency_loss(tp, student, teacher, audio, {0.9}, {0.5}, noise);
    });
    EXPECT_LT(r.max_rel_error, 1e-6) << r.worst_param;
}

TEST(ConsistencyTrainer, TeacherIsEmaAndNeverGetsGradients) {
    CodecModel<float> m(tiny());
    ConsistencyTrainConfig cfg;
    cfg.ema_teacher_momentum = 0.9;
    ConsistencyTrainer<float> tr(m, cfg, 3);
    const auto before_teacher = tr.teacher().params()[0]->value;
    tr.step(tone_batch(2, 1, 4));
    const auto& student_now = m.params()[0]->value;
    const auto& teacher_now = tr.teacher().params()[0]->value;
    for (std::size_t i = 0; i < teacher_now.size(); ++i)
        EXPECT_FLOAT_EQ(teacher_now[i], 0.9f * before_teacher[i] + 0.1f * student_now[i]);
    for (auto* p : tr.teacher().params())
        for (float g : p->grad.data()) ASSERT_EQ(g, 0.0f);
}

TEST(ConsistencyTrainer, LossDecreasesOnToneData) {
    CodecModel<float> m(tiny());
    ConsistencyTrainConfig cfg;
    cfg.lr = 1e-3;
    ConsistencyTrainer<float> tr(m, cfg, 3);
    const auto fixed = tone_batch(4, 1, 11);
    const auto d = tr.draw(4, kHop);
    const double l0 = tr.loss(fixed, d);
    for (std::uint64_t s = 0; s < 500; ++s) tr.step(tone_batch(4, 1, 100 + s));
    EXPECT_LT(tr.loss(fixed, d), l0);
    EXPECT_LT(boundary_check(m, 3), 1e-6);
}

TEST(CodecCheckpoint, RoundTrip) {
    CodecModel<float> m(tiny());
    const auto path = std::filesystem::temp_directory_path() / "darf_codec_rt.darf";
    m.save(path);
    auto loaded = CodecModel<float>::load(nn::load_checkpoint(path));
    const auto a = tone_batch(1, 1, 9);
    EXPECT_EQ(encode_batch(m, a), encode_batch(loaded, a));
    std::filesystem::remove(path);
}
