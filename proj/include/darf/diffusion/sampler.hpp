#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "darf/diffusion/guidance.hpp"
#include "darf/diffusion/schedule.hpp"
#include "darf/parallel.hpp"
#include "darf/rng.hpp"

namespace darf::diffusion {

struct SamplerConfig {
    NoiseSchedule schedule = build_schedule(0.002, 80.0, 30, 7.0);
    double stochasticity = 1.0;  // 0: probability-flow ODE step; 1: full ancestral step
    double stereo_width = 0.0;
    bool second_order = true;  // Heun correction of the deterministic part (one extra model call per step)
    std::uint64_t seed = 0;
    std::size_t chunk = 64;    // items per model call; fixed so results do not depend on threads
    std::size_t threads = 1;

    void validate() const {
        if (schedule.levels.empty()) throw ConfigError("sampler: empty noise schedule");
        if (!(stochasticity >= 0 && stochasticity <= 1)) throw ConfigError("sampler: stochasticity must lie in [0, 1]");
        if (!(stereo_width >= 0 && stereo_width <= 1)) throw ConfigError("sampler: stereo width must lie in [0, 1]");
        if (chunk == 0) throw ConfigError("sampler: chunk must be positive");
    }

    /// Steps run before the pseudo-stereo fork: ⌈(1 − width)·T⌉.
    std::size_t shared_steps() const {
        const double T = static_cast<double>(schedule.steps());
        return static_cast<std::size_t>(std::ceil((1.0 - stereo_width) * T - 1e-9));
    }
};

enum class MaskMode { inpaint, outpaint, variation, loop };

/// mask[f] true means frame f is generated; false frames come from `reference`.
/// variation ignores the mask and restarts from the reference noised to
/// `renoise`; loop pins the first `loop_frames` frames to the reference's last
/// `loop_frames` frames.
struct MaskSpec {
    MaskMode mode = MaskMode::inpaint;
    std::vector<bool> mask;
    nn::Tensor<float> reference;  // (B, F, 64)
    double renoise = 80.0;
    std::size_t loop_frames = 0;
};

namespace detail {

// Stream tags; every item owns one stream per role.
inline constexpr std::uint64_t kChainStream = 0x5a3;
inline constexpr std::uint64_t kForkStream = 0x57e2;
inline constexpr std::uint64_t kReferenceStream = 0x3a5c;

struct Chain {
    nn::Tensor<float> x;       // (n, F, 64)
    std::vector<Rng> noise;    // one per item
};

/// Frames pinned to a reference, re-noised to the current level after each step.
struct Pin {
    std::vector<bool> keep;    // per frame: true = take the reference
    nn::Tensor<float> ref;     // (n, F, 64)
    std::vector<Rng> noise;

    void apply(nn::Tensor<float>& x, double sigma) {
        const std::size_t n = x.dim(0), F = x.dim(1), C = x.dim(2);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t f = 0; f < F; ++f) {
                if (!keep[f]) continue;
                for (std::size_t c = 0; c < C; ++c) {
                    const std::size_t i = (b * F + f) * C + c;
                    x[i] = sigma == 0.0 ? ref[i] : static_cast<float>(ref[i] + sigma * noise[b].normal());
                }
            }
    }
};

inline std::vector<Rng> streams(std::uint64_t seed, std::uint64_t tag, std::size_t first, std::size_t n) {
    std::vector<Rng> r;
    r.reserve(n);
    for (std::size_t b = 0; b < n; ++b) r.emplace_back(seed, std::initializer_list<std::uint64_t>{tag, first + b});
    return r;
}

inline void fill_normal(nn::Tensor<float>& x, std::vector<Rng>& rngs, double scale) {
    const std::size_t per = x.size() / x.dim(0);
    for (std::size_t b = 0; b < x.dim(0); ++b)
        for (std::size_t j = 0; j < per; ++j) x[b * per + j] = static_cast<float>(scale * rngs[b].normal());
}

/// Ancestral steps [from, to) of the ladder. With score = (D − x)/σ², the
/// deterministic part moves x along the probability-flow direction
/// dx/dσ = −σ·score = (x − D)/σ from σ to σ_down (Euler, plus a Heun correction
/// when second_order), and σ_up of fresh noise brings the marginal level back
/// to σ_next. The step to σ = 0 returns D.
inline void run_steps(Chain& ch, std::size_t from, std::size_t to, const ConditioningBundle& cond,
                      const SamplerConfig& cfg, const Denoiser& model, Pin* pin) {
    const auto& lv = cfg.schedule.levels;
    const std::size_t per = ch.x.size() / ch.x.dim(0);
    for (std::size_t i = from; i < to; ++i) {
        const double s = lv[i], sn = cfg.schedule.next(i);
        const nn::Tensor<float> D = guided_denoise(ch.x, s, cond, model);
        if (sn == 0.0) {
            ch.x = D;
        } else {
            const double eta = cfg.stochasticity;
            const double up = std::min(sn, eta * std::sqrt(sn * sn * (s * s - sn * sn) / (s * s)));
            const double down = std::sqrt(sn * sn - up * up);
            const double h = down - s;
            nn::Tensor<float> xd(ch.x.shape());
            for (std::size_t j = 0; j < xd.size(); ++j)
                xd[j] = static_cast<float>(ch.x[j] + h * (double(ch.x[j]) - D[j]) / s);
            if (cfg.second_order) {
                const nn::Tensor<float> D2 = guided_denoise(xd, down, cond, model);
                for (std::size_t j = 0; j < xd.size(); ++j) {
                    const double d1 = (double(ch.x[j]) - D[j]) / s, d2 = (double(xd[j]) - D2[j]) / down;
                    xd[j] = static_cast<float>(ch.x[j] + 0.5 * h * (d1 + d2));
                }
            }
            if (up > 0)
                for (std::size_t b = 0; b < ch.x.dim(0); ++b)
                    for (std::size_t j = 0; j < per; ++j) xd[b * per + j] += static_cast<float>(up * ch.noise[b].normal());
            ch.x = std::move(xd);
        }
        if (pin) pin->apply(ch.x, sn);
    }
}

inline void check_shape(const ConditioningBundle& cond, const nn::Shape& shape) {
    if (shape.size() != 3 || shape[0] == 0 || shape[1] == 0 || shape[2] == 0)
        throw DimensionError("sampler: expected a (batch, frames, channels) shape, got " + nn::to_string(shape));
    cond.validate(shape);
}

}  // namespace detail

/// Draws shape[0] sequences of shape (frames, channels). Item b uses noise
/// streams keyed by (seed, first_item + b) and is evaluated in fixed chunks, so
/// the result does not depend on the thread count.
inline nn::Tensor<float> sample(const ConditioningBundle& cond, const SamplerConfig& cfg, const Denoiser& model,
                                const nn::Shape& shape, std::size_t first_item = 0) {
    cfg.validate();
    detail::check_shape(cond, shape);
    const std::size_t B = shape[0], per = shape[1] * shape[2];
    nn::Tensor<float> out(shape);
    const std::size_t chunks = (B + cfg.chunk - 1) / cfg.chunk;
    parallel_for(chunks, cfg.threads, [&](std::size_t c) {
        const std::size_t lo = c * cfg.chunk, n = std::min(cfg.chunk, B - lo);
        detail::Chain ch{nn::Tensor<float>(nn::Shape{n, shape[1], shape[2]}),
                         detail::streams(cfg.seed, detail::kChainStream, first_item + lo, n)};
        detail::fill_normal(ch.x, ch.noise, cfg.schedule.levels.front());
        const ConditioningBundle sub = cond.slice(lo, n);
        detail::run_steps(ch, 0, cfg.schedule.steps(), sub, cfg, model, nullptr);
        std::copy(ch.x.raw(), ch.x.raw() + ch.x.size(), out.raw() + lo * per);
    });
    return out;
}

inline nn::Tensor<float> sample(const ConditioningBundle& cond, const SamplerConfig& cfg, const Denoiser& model,
                                std::size_t B, std::size_t F, std::size_t first_item = 0) {
    return sample(cond, cfg, model, nn::Shape{B, F, kLatent}, first_item);
}

/// Left/right channels sharing the first ⌈(1 − width)·T⌉ steps. The left
/// channel continues the plain sample's noise stream; the right one switches to
/// an independent stream at the fork.
inline std::pair<nn::Tensor<float>, nn::Tensor<float>> pseudo_stereo_sample(const ConditioningBundle& cond,
                                                                          const SamplerConfig& cfg,
                                                                          const Denoiser& model,
                                                                          const nn::Shape& shape,
                                                                          std::size_t first_item = 0) {
    cfg.validate();
    detail::check_shape(cond, shape);
    const std::size_t B = shape[0], per = shape[1] * shape[2];
    nn::Tensor<float> left(shape), right(shape);
    const std::size_t T = cfg.schedule.steps(), k = std::min(T, cfg.shared_steps());
    const std::size_t chunks = (B + cfg.chunk - 1) / cfg.chunk;
    parallel_for(chunks, cfg.threads, [&](std::size_t c) {
        const std::size_t lo = c * cfg.chunk, n = std::min(cfg.chunk, B - lo);
        detail::Chain l{nn::Tensor<float>(nn::Shape{n, shape[1], shape[2]}),
                        detail::streams(cfg.seed, detail::kChainStream, first_item + lo, n)};
        detail::fill_normal(l.x, l.noise, cfg.schedule.levels.front());
        const ConditioningBundle sub = cond.slice(lo, n);
        detail::run_steps(l, 0, k, sub, cfg, model, nullptr);
        detail::Chain r{l.x, detail::streams(cfg.seed, detail::kForkStream, first_item + lo, n)};
        detail::run_steps(l, k, T, sub, cfg, model, nullptr);
        detail::run_steps(r, k, T, sub, cfg, model, nullptr);
        std::copy(l.x.raw(), l.x.raw() + l.x.size(), left.raw() + lo * per);
        std::copy(r.x.raw(), r.x.raw() + r.x.size(), right.raw() + lo * per);
    });
    return {std::move(left), std::move(right)};
}

/// Mask-constrained sampling; see MaskSpec. Output shape equals the reference's.
inline nn::Tensor<float> masked_sample(const ConditioningBundle& cond, const SamplerConfig& cfg,
                                       const MaskSpec& spec, const Denoiser& model, std::size_t first_item = 0) {
    cfg.validate();
    const nn::Tensor<float>& ref = spec.reference;
    detail::check_shape(cond, ref.shape());
    const std::size_t B = ref.dim(0), F = ref.dim(1), C = ref.dim(2);

    std::vector<bool> keep(F, false);  // frames taken from the (possibly shifted) reference
    nn::Tensor<float> pinned = ref;
    switch (spec.mode) {
        case MaskMode::inpaint:
        case MaskMode::outpaint:
            if (spec.mask.size() != F)
                throw DimensionError("masked_sample: mask has " + std::to_string(spec.mask.size()) +
                                     " frames, reference has " + std::to_string(F));
            for (std::size_t f = 0; f < F; ++f) keep[f] = !spec.mask[f];
            break;
        case MaskMode::loop: {
            const std::size_t k = spec.loop_frames;
            if (k == 0 || k >= F) throw ConfigError("masked_sample: loop needs 0 < loop_frames < frames");
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t f = 0; f < k; ++f)
                    std::copy_n(ref.raw() + (b * F + F - k + f) * C, C, pinned.raw() + (b * F + f) * C);
            for (std::size_t f = 0; f < k; ++f) keep[f] = true;
            break;
        }
        case MaskMode::variation:
            if (!(spec.renoise > 0)) throw ConfigError("masked_sample: variation needs a positive re-noise level");
            break;
    }

    const auto& lv = cfg.schedule.levels;
    std::size_t start = 0;
    if (spec.mode == MaskMode::variation) {
        start = lv.size() - 1;
        for (std::size_t i = 0; i < lv.size(); ++i)
            if (lv[i] <= spec.renoise) {
                start = i;
                break;
            }
    }
    const bool any_pinned = std::find(keep.begin(), keep.end(), true) != keep.end();

    nn::Tensor<float> out(ref.shape());
    const std::size_t chunks = (B + cfg.chunk - 1) / cfg.chunk;
    parallel_for(chunks, cfg.threads, [&](std::size_t c) {
        const std::size_t lo = c * cfg.chunk, n = std::min(cfg.chunk, B - lo);
        auto rows = [&](const nn::Tensor<float>& t) {
            return nn::Tensor<float>(nn::Shape{n, F, C}, std::vector<float>(t.raw() + lo * F * C, t.raw() + (lo + n) * F * C));
        };
        detail::Chain ch{nn::Tensor<float>(nn::Shape{n, F, C}),
                         detail::streams(cfg.seed, detail::kChainStream, first_item + lo, n)};
        detail::fill_normal(ch.x, ch.noise, lv[start]);
        if (spec.mode == MaskMode::variation) {
            const nn::Tensor<float> r = rows(ref);
            for (std::size_t i = 0; i < ch.x.size(); ++i) ch.x[i] += r[i];
        }
        const ConditioningBundle sub = cond.slice(lo, n);
        if (any_pinned) {
            detail::Pin pin{keep, rows(pinned), detail::streams(cfg.seed, detail::kReferenceStream, first_item + lo, n)};
            pin.apply(ch.x, lv[start]);
            detail::run_steps(ch, start, lv.size(), sub, cfg, model, &pin);
        } else {
            detail::run_steps(ch, start, lv.size(), sub, cfg, model, nullptr);
        }
        std::copy(ch.x.raw(), ch.x.raw() + ch.x.size(), out.raw() + lo * F * C);
    });
    return out;
}

}  // namespace darf::diffusion
