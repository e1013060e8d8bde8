#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "darf/error.hpp"
#include "darf/ladder.hpp"
#include "darf/nnkit/checkpoint.hpp"
#include "darf/nnkit/layers.hpp"
#include "darf/nnkit/optim.hpp"
#include "darf/rng.hpp"
#include "darf/synthdata/dataset.hpp"

namespace darf::codec {

inline constexpr std::size_t kChannels = 64;    // latent channels
inline constexpr std::size_t kHop = 4096;       // audio samples per latent frame
inline constexpr std::size_t kPatch = 64;       // samples per decoder position
inline constexpr std::size_t kPositions = kHop / kPatch;

/// frames × 64 latent codes, every value strictly inside (−1, 1).
struct LatentSequence {
    nn::Tensor<float> values;  // (frames, 64)

    LatentSequence() = default;
    explicit LatentSequence(nn::Tensor<float> v) : values(std::move(v)) {
        if (values.rank() != 2 || values.dim(1) != kChannels)
            throw DimensionError("latent sequence must be (frames, 64), got " + nn::to_string(values.shape()));
    }

    std::size_t frames() const { return values.empty() ? 0 : values.dim(0); }

    bool in_range() const {
        return std::all_of(values.data().begin(), values.data().end(),
                           [](float v) { return v > -1.0f && v < 1.0f; });
    }
};

/// Rows of a (B, F, 64) batch as individual sequences.
inline std::vector<LatentSequence> split_batch(const nn::Tensor<float>& batch) {
    if (batch.rank() != 3 || batch.dim(2) != kChannels)
        throw DimensionError("latent batch must be (batch, frames, 64), got " + nn::to_string(batch.shape()));
    std::vector<LatentSequence> out;
    const std::size_t per = batch.dim(1) * kChannels;
    for (std::size_t b = 0; b < batch.dim(0); ++b)
        out.emplace_back(nn::Tensor<float>(nn::Shape{batch.dim(1), kChannels},
                                           std::vector<float>(batch.raw() + b * per, batch.raw() + (b + 1) * per)));
    return out;
}

struct CodecConfig {
    std::size_t width = 64;
    std::size_t blocks = 3;
    std::size_t embed = 128;
    double sigma_data = 0.5;
    double t_min = 0.002;
    double t_max = 80.0;
    std::size_t levels = 32;
    double rho = 7.0;
    bool boundary_scaling = true;  // false only for the ablation control
    std::uint64_t seed = 1;

    /// Ascending ladder t_1 = t_min < … < t_N = t_max.
    std::vector<double> ladder() const {
        auto l = karras_levels(t_min, t_max, levels, rho);
        std::reverse(l.begin(), l.end());
        return l;
    }
};

/// Strided-conv encoder with tanh head, and a consistency-function decoder
/// f(x, t, z) = c_skip(t)·x + c_out(t)·F(c_in(t)·x, t, z).
template <class T>
struct CodecModel {
    CodecConfig cfg;
    nn::Conv1d<T> enc1, enc2;
    nn::Linear<T> enc_head;
    nn::Linear<T> temb1, temb2;
    nn::Conv1d<T> dec_in, dec_out;
    std::vector<nn::ResBlock<T>> blocks;

    explicit CodecModel(CodecConfig c = {}) : cfg(c) {
        Rng rng(cfg.seed, {0xc0dec});
        const std::size_t W = cfg.width;
        enc1 = nn::Conv1d<T>("codec/enc1", kPatch, W, 8, rng, 8);
        enc2 = nn::Conv1d<T>("codec/enc2", W, W, 8, rng, 8);
        enc_head = nn::Linear<T>("codec/enc_head", W, kChannels, rng);
        temb1 = nn::Linear<T>("codec/temb1", 64, cfg.embed, rng);
        temb2 = nn::Linear<T>("codec/temb2", cfg.embed, cfg.embed, rng);
        dec_in = nn::Conv1d<T>::same("codec/dec_in", kPatch + kChannels, W, 3, rng);
        for (std::size_t i = 0; i < cfg.blocks; ++i)
            blocks.emplace_back("codec/block" + std::to_string(i), W, W, cfg.embed, 3, rng);
        dec_out = nn::Conv1d<T>::same("codec/dec_out", W, kPatch, 3, rng);
    }

    nn::ParamList<T> encoder_params() {
        nn::ParamList<T> ps;
        enc1.collect(ps);
        enc2.collect(ps);
        enc_head.collect(ps);
        return ps;
    }

    nn::ParamList<T> params() {
        nn::ParamList<T> ps = encoder_params();
        temb1.collect(ps);
        temb2.collect(ps);
        dec_in.collect(ps);
        for (auto& b : blocks) b.collect(ps);
        dec_out.collect(ps);
        return ps;
    }

    double c_skip(double t) const {
        const double s2 = cfg.sigma_data * cfg.sigma_data, d = t - cfg.t_min;
        return s2 / (d * d + s2);
    }
    double c_out(double t) const {
        return cfg.sigma_data * (t - cfg.t_min) / std::sqrt(cfg.sigma_data * cfg.sigma_data + t * t);
    }
    double c_in(double t) const { return 1.0 / std::sqrt(cfg.sigma_data * cfg.sigma_data + t * t); }

    /// audio (B, N) with N a multiple of 4096 -> latents (B, N/4096, 64).
    nn::Var encode(nn::Tape<T>& tp, nn::Var audio) {
        const nn::Shape& s = tp.shape(audio);
        if (s.size() != 2 || s[1] % kHop != 0)
            throw DimensionError("encode: audio length must be a multiple of 4096 (pad first), got shape " +
                                 nn::to_string(s));
        nn::Var x = nn::ops::reshape(tp, audio, nn::Shape{s[0], s[1] / kPatch, kPatch});
        x = nn::ops::silu(tp, enc1(tp, x));
        x = nn::ops::silu(tp, enc2(tp, x));
        return nn::ops::tanh(tp, enc_head(tp, x));
    }

    /// x (B, P, 64) noisy audio positions, t per item, z (B, P/64, 64).
    nn::Var consistency_fn(nn::Tape<T>& tp, nn::Var x, const std::vector<double>& t, nn::Var z) {
        const nn::Shape& xs = tp.shape(x);
        const nn::Shape& zs = tp.shape(z);
        if (xs.size() != 3 || zs.size() != 3 || xs[0] != zs[0] || xs[1] != zs[1] * kPositions || t.size() != xs[0])
            throw DimensionError("consistency_fn: signal " + nn::to_string(xs) + " and latents " + nn::to_string(zs) +
                                 " disagree");
        std::vector<T> cin(t.size()), cskip(t.size()), cout(t.size());
        std::vector<double> cnoise(t.size());
        for (std::size_t b = 0; b < t.size(); ++b) {
            cin[b] = static_cast<T>(c_in(t[b]));
            cskip[b] = static_cast<T>(c_skip(t[b]));
            cout[b] = static_cast<T>(c_out(t[b]));
            cnoise[b] = std::log(t[b]) / 4.0;
        }
        nn::Var e = tp.constant(nn::sinusoidal_embedding<T>(cnoise, 64));
        e = nn::ops::silu(tp, temb2(tp, nn::ops::silu(tp, temb1(tp, e))));
        nn::Var h = nn::ops::concat_last(tp, nn::ops::scale_rows(tp, x, cin), nn::ops::upsample(tp, z, kPositions));
        h = dec_in(tp, h);
        for (auto& blk : blocks) h = blk(tp, h, e);
        nn::Var F = dec_out(tp, nn::ops::silu(tp, nn::ops::group_norm(tp, h, 8)));
        if (!cfg.boundary_scaling) return F;
        return nn::ops::add(tp, nn::ops::scale_rows(tp, x, cskip), nn::ops::scale_rows(tp, F, cout));
    }

    void save(const std::filesystem::path& path, std::vector<nn::NamedTensor> extra = {}) {
        std::vector<nn::NamedTensor> recs = std::move(extra);
        recs.push_back({"meta/codec/config",
                        nn::Tensor<float>(nn::Shape{8}, {float(cfg.width), float(cfg.blocks), float(cfg.embed),
                                                         float(cfg.sigma_data), float(cfg.t_min), float(cfg.t_max),
                                                         float(cfg.levels), float(cfg.rho)})});
        nn::append_params(recs, params());
        nn::save_checkpoint(path, recs);
    }

    static CodecModel load(const std::vector<nn::NamedTensor>& recs) {
        const auto* c = nn::find_record(recs, "meta/codec/config");
        if (!c || c->size() != 8) throw MissingArtifactError("checkpoint has no codec configuration record");
        CodecConfig cfg;
        cfg.width = static_cast<std::size_t>((*c)[0]);
        cfg.blocks = static_cast<std::size_t>((*c)[1]);
        cfg.embed = static_cast<std::size_t>((*c)[2]);
        cfg.sigma_data = (*c)[3];
        cfg.t_min = (*c)[4];
        cfg.t_max = (*c)[5];
        cfg.levels = static_cast<std::size_t>((*c)[6]);
        cfg.rho = (*c)[7];
        CodecModel m(cfg);
        nn::load_params(m.params(), recs);
        return m;
    }
};

/// Batched, gradient-free encoder: audio (B, N) -> (B, N/4096, 64).
template <class T>
nn::Tensor<T> encode_batch(CodecModel<T>& m, const nn::Tensor<T>& audio) {
    nn::Tape<T> tp(false);
    return tp.value(m.encode(tp, tp.constant(audio)));
}

template <class T>
LatentSequence encode(const synth::AudioBuffer& a, CodecModel<T>& m) {
    if (a.samples.size() % kHop != 0 || a.samples.empty())
        throw DataError("encode: " + std::to_string(a.samples.size()) +
                        " samples is not a positive multiple of 4096; padding required");
    nn::Tensor<T> x(nn::Shape{1, a.samples.size()});
    std::copy(a.samples.begin(), a.samples.end(), x.raw());
    nn::Tensor<T> z = encode_batch(m, x);
    return LatentSequence(nn::cast<float>(z).reshaped(nn::Shape{z.dim(1), kChannels}));
}

/// One pass of the consistency function from t_render·noise, conditioned on z
/// (B, F, 64). Output (B, F·4096) clamped to [−1, 1].
template <class T>
nn::Tensor<T> decode_batch(CodecModel<T>& m, const nn::Tensor<T>& z, double t_render, std::uint64_t seed) {
    const std::size_t B = z.dim(0), F = z.dim(1), P = F * kPositions;
    nn::Tensor<T> x(nn::Shape{B, P, kPatch});
    for (std::size_t b = 0; b < B; ++b) {
        Rng rng(seed, {0xdec0de, b});
        for (std::size_t i = 0; i < P * kPatch; ++i) x[b * P * kPatch + i] = static_cast<T>(t_render * rng.normal());
    }
    nn::Tape<T> tp(false);
    nn::Tensor<T> y = tp.value(m.consistency_fn(tp, tp.constant(x), std::vector<double>(B, t_render), tp.constant(z)));
    for (auto& v : y.data()) v = std::clamp(v, T{-1}, T{1});
    return std::move(y).reshaped(nn::Shape{B, F * kHop});
}

template <class T>
synth::AudioBuffer decode(const LatentSequence& z, CodecModel<T>& m, double t_render, std::uint64_t seed = 0) {
    nn::Tensor<T> zb = nn::cast<T>(z.values).reshaped(nn::Shape{1, z.frames(), kChannels});
    nn::Tensor<T> y = decode_batch(m, zb, t_render, seed);
    synth::AudioBuffer out;
    out.samples.assign(y.data().begin(), y.data().end());
    return out;
}

/// Max |f(x, t_min) − x| over random signals and latent conditionings.
template <class T>
double boundary_check(CodecModel<T>& m, std::size_t trials, std::uint64_t seed = 0) {
    double worst = 0;
    for (std::size_t k = 0; k < trials; ++k) {
        Rng rng(seed, {0xb0, k});
        const std::size_t F = 1 + rng.below(2);
        nn::Tensor<T> x(nn::Shape{2, F * kPositions, kPatch}), z(nn::Shape{2, F, kChannels});
        for (auto& v : x.data()) v = static_cast<T>(rng.normal() * 3.0);
        for (auto& v : z.data()) v = static_cast<T>(rng.uniform(-0.99, 0.99));
        nn::Tape<T> tp(false);
        const auto& y = tp.value(m.consistency_fn(tp, tp.constant(x), {m.cfg.t_min, m.cfg.t_min}, tp.constant(z)));
        for (std::size_t i = 0; i < y.size(); ++i)
            worst = std::max(worst, std::abs(static_cast<double>(y[i]) - static_cast<double>(x[i])));
    }
    return worst;
}

struct ConsistencyTrainConfig {
    double ema_teacher_momentum = 0.9;
    double lr = 2e-4;
    std::size_t warmup_steps = 100;
    // Level pairs (t_i, t_{i+1}) are drawn uniformly over adjacent ladder indices.
};

/// Noise directions and ladder indices for one batch, so a batch can be
/// replayed exactly (fixed-batch monitoring).
template <class T>
struct ConsistencyDraw {
    std::vector<std::size_t> index;  // i in [0, N−2]: teacher at t_i, student at t_{i+1}
    nn::Tensor<T> noise;             // (B, P, 64)
};

/// ‖f_student(x + t_s·n, t_s) − f_teacher(x + t_t·n, t_t)‖² averaged, with the
/// teacher evaluated on a separate non-recording tape (never receives gradients).
template <class T>
nn::Var consistency_loss(nn::Tape<T>& tp, CodecModel<T>& student, CodecModel<T>& teacher, const nn::Tensor<T>& audio,
                         const std::vector<double>& t_student, const std::vector<double>& t_teacher,
                         const nn::Tensor<T>& noise) {
    const std::size_t B = audio.dim(0), P = audio.dim(1) / kPatch;
    auto noised = [&](const std::vector<double>& t) {
        nn::Tensor<T> x = audio.reshaped(nn::Shape{B, P, kPatch});
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < P * kPatch; ++i)
                x[b * P * kPatch + i] += static_cast<T>(t[b]) * noise[b * P * kPatch + i];
        return x;
    };
    nn::Tape<T> tt(false);
    nn::Var zt = teacher.encode(tt, tt.constant(audio));
    nn::Tensor<T> target = tt.value(teacher.consistency_fn(tt, tt.constant(noised(t_teacher)), t_teacher, zt));

    nn::Var z = student.encode(tp, tp.constant(audio));
    nn::Var pred = student.consistency_fn(tp, tp.constant(noised(t_student)), t_student, z);
    return nn::ops::mse(tp, pred, tp.constant(std::move(target)));
}

template <class T>
class ConsistencyTrainer {
public:
    ConsistencyTrainer(CodecModel<T>& student, ConsistencyTrainConfig cfg, std::uint64_t seed)
        : student_(student), teacher_(student.cfg), cfg_(cfg), rng_(seed, {0xc7}) {
        params_ = student_.params();
        teacher_params_ = teacher_.params();
        ema_.momentum = cfg_.ema_teacher_momentum;
        ema_.update(params_);
        ema_.apply_to(teacher_params_);
        opt_.lr = cfg_.lr;
        sched_.base_lr = cfg_.lr;
        sched_.warmup_steps = cfg_.warmup_steps;
        ladder_ = student_.cfg.ladder();
    }

    ConsistencyTrainer(const ConsistencyTrainer&) = delete;
    ConsistencyTrainer& operator=(const ConsistencyTrainer&) = delete;

    ConsistencyDraw<T> draw(std::size_t batch, std::size_t samples) {
        ConsistencyDraw<T> d;
        d.noise = nn::Tensor<T>(nn::Shape{batch, samples / kPatch, kPatch});
        for (auto& v : d.noise.data()) v = static_cast<T>(rng_.normal());
        for (std::size_t b = 0; b < batch; ++b) d.index.push_back(rng_.below(ladder_.size() - 1));
        return d;
    }

    /// Consistency loss without updating anything.
    double loss(const nn::Tensor<T>& audio, const ConsistencyDraw<T>& d) {
        nn::Tape<T> tp(false);
        return static_cast<double>(tp.value(forward(tp, audio, d))[0]);
    }

    /// One optimizer step on audio (B, N); returns the loss. A non-finite loss
    /// skips the update and throws NumericalError.
    double step(const nn::Tensor<T>& audio) {
        const ConsistencyDraw<T> d = draw(audio.dim(0), audio.dim(1));
        nn::zero_grads(params_);
        nn::Tape<T> tp(true);
        nn::Var l = forward(tp, audio, d);
        const double value = static_cast<double>(tp.value(l)[0]);
        if (!std::isfinite(value)) throw NumericalError("consistency loss is non-finite at step " + std::to_string(steps_));
        tp.backward(l);
        opt_.update(params_, sched_(steps_));
        ema_.update(params_);
        ema_.apply_to(teacher_params_);
        ++steps_;
        return value;
    }

    CodecModel<T>& teacher() { return teacher_; }
    std::size_t steps() const { return steps_; }

private:
    nn::Var forward(nn::Tape<T>& tp, const nn::Tensor<T>& audio, const ConsistencyDraw<T>& d) {
        std::vector<double> t_lo, t_hi;
        for (std::size_t i : d.index) t_lo.push_back(ladder_[i]), t_hi.push_back(ladder_[i + 1]);
        return consistency_loss(tp, student_, teacher_, audio, t_hi, t_lo, d.noise);
    }

    CodecModel<T>& student_;
    CodecModel<T> teacher_;
    ConsistencyTrainConfig cfg_;
    Rng rng_;
    nn::ParamList<T> params_, teacher_params_;
    nn::AdamW<T> opt_;
    nn::Ema<T> ema_;
    nn::LrSchedule sched_;
    std::vector<double> ladder_;
    std::size_t steps_ = 0;
};

}  // namespace darf::codec
