#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "darf/error.hpp"
#include "darf/nnkit/checkpoint.hpp"
#include "darf/nnkit/layers.hpp"
#include "darf/nnkit/ops.hpp"
#include "darf/rng.hpp"

namespace darf::diffusion {

inline constexpr std::size_t kLatent = 64;  // latent channels
inline constexpr std::size_t kStyle = 64;   // style embedding width

/// Anything that maps a noisy batch x (B, F, 64) at level σ to a denoised
/// estimate. A null pointer for context (B, F, 64) or style (B, 64) means the
/// source is absent for every item. Implementations must be safe to call
/// concurrently.
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual nn::Tensor<float> denoise(const nn::Tensor<float>& x, double sigma, const nn::Tensor<float>* context,
                                      const nn::Tensor<float>* style) const = 0;
};

struct DenoiserConfig {
    std::size_t width = 64;
    std::size_t blocks = 4;     // per side; the decoder mirrors the encoder
    std::size_t embed = 256;    // fused conditioning width
    std::size_t kernel = 3;
    std::size_t groups = 8;
    double sigma_data = 0.5;
    std::uint64_t seed = 1;

    void validate() const {
        if (width == 0 || width % groups != 0 || blocks == 0 || embed == 0 || kernel % 2 == 0 || !(sigma_data > 0))
            throw ConfigError("denoiser: need width a positive multiple of groups, blocks >= 1, odd kernel, sigma_data > 0");
    }
};

/// x₀-predicting denoiser with EDM preconditioning:
/// D(x, σ) = c_skip(σ)·x + c_out(σ)·F(c_in(σ)·x ‖ context ‖ null-flag, emb(style, c_noise(σ))).
/// The body is a constant-resolution residual encoder/decoder whose decoder
/// blocks take the mirrored encoder output as concatenated channels; every
/// block is FiLM-modulated by the fused embedding.
template <class T>
struct DenoiserModel {
    DenoiserConfig cfg;
    nn::Conv1d<T> in_conv, out_conv;
    nn::Linear<T> dense1, dense2;
    nn::Parameter<T> null_style;
    std::vector<nn::ResBlock<T>> down, up;

    explicit DenoiserModel(DenoiserConfig c = {}) : cfg(c) {
        cfg.validate();
        Rng rng(cfg.seed, {0x1d4});
        const std::size_t W = cfg.width;
        in_conv = nn::Conv1d<T>::same("ldm/in", 2 * kLatent + 1, W, cfg.kernel, rng);
        dense1 = nn::Linear<T>("ldm/emb1", kStyle + 64, cfg.embed, rng);
        dense2 = nn::Linear<T>("ldm/emb2", cfg.embed, cfg.embed, rng);
        nn::Tensor<T> ns(nn::Shape{kStyle});
        for (auto& v : ns.data()) v = static_cast<T>(rng.normal() / std::sqrt(double(kStyle)));
        null_style = nn::Parameter<T>("ldm/null_style", std::move(ns));
        for (std::size_t i = 0; i < cfg.blocks; ++i)
            down.emplace_back("ldm/down" + std::to_string(i), W, W, cfg.embed, cfg.kernel, rng, cfg.groups);
        for (std::size_t i = 0; i < cfg.blocks; ++i)
            up.emplace_back("ldm/up" + std::to_string(i), 2 * W, W, cfg.embed, cfg.kernel, rng, cfg.groups);
        out_conv = nn::Conv1d<T>::same("ldm/out", W, kLatent, cfg.kernel, rng);
    }

    nn::ParamList<T> params() {
        nn::ParamList<T> ps;
        in_conv.collect(ps);
        dense1.collect(ps);
        dense2.collect(ps);
        ps.push_back(&null_style);
        for (auto& b : down) b.collect(ps);
        for (auto& b : up) b.collect(ps);
        out_conv.collect(ps);
        return ps;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (auto* p : params()) n += p->value.size();
        return n;
    }

    double c_skip(double s) const { return sd2() / (s * s + sd2()); }
    double c_out(double s) const { return s * cfg.sigma_data / std::sqrt(s * s + sd2()); }
    double c_in(double s) const { return 1.0 / std::sqrt(s * s + sd2()); }
    static double c_noise(double s) { return std::log(s) / 4.0; }
    /// Loss weight making the effective target unit-variance at every level.
    double loss_weight(double s) const { return (s * s + sd2()) / (s * s * sd2()); }

    /// x, context (B, F, 64); style (B, 64). Items with a null flag ignore the
    /// corresponding row of context/style, which may then hold anything.
    nn::Var forward(nn::Tape<T>& tp, nn::Var x, const std::vector<double>& sigma, nn::Var context,
                    const std::vector<bool>& context_null, nn::Var style, const std::vector<bool>& style_null) {
        const nn::Shape& xs = tp.shape(x);
        const std::size_t B = xs.size() == 3 ? xs[0] : 0, F = xs.size() == 3 ? xs[1] : 0;
        if (xs.size() != 3 || xs[2] != kLatent || tp.shape(context) != xs || sigma.size() != B ||
            context_null.size() != B || style_null.size() != B || tp.shape(style) != nn::Shape{B, kStyle})
            throw DimensionError("denoiser: x " + nn::to_string(xs) + ", context " + nn::to_string(tp.shape(context)) +
                                 ", style " + nn::to_string(tp.shape(style)) + ", " + std::to_string(sigma.size()) +
                                 " levels");
        std::vector<T> cin(B), cskip(B), cout(B);
        std::vector<double> cn(B);
        for (std::size_t b = 0; b < B; ++b) {
            if (!(sigma[b] > 0)) throw NumericalError("denoiser: noise level must be positive");
            cin[b] = static_cast<T>(c_in(sigma[b]));
            cskip[b] = static_cast<T>(c_skip(sigma[b]));
            cout[b] = static_cast<T>(c_out(sigma[b]));
            cn[b] = c_noise(sigma[b]);
        }
        // Context enters at unit scale like c_in·x. Null context: zero block
        // plus flag channel set to 1.
        std::vector<T> keep(B);
        nn::Tensor<T> flag(nn::Shape{B, F, 1});
        for (std::size_t b = 0; b < B; ++b) {
            keep[b] = context_null[b] ? T(0) : T(1);
            for (std::size_t f = 0; f < F; ++f) flag.at(b, f, 0) = context_null[b] ? T(1) : T(0);
        }
        nn::Var ctx = nn::ops::scale_rows(tp, context, keep);
        nn::Var h = nn::ops::concat_last(tp, nn::ops::scale_rows(tp, x, cin), ctx);
        h = nn::ops::concat_last(tp, h, tp.constant(std::move(flag)));

        nn::Var s = nn::ops::select_rows(tp, style, tp.parameter(null_style), style_null);
        nn::Var e = nn::ops::concat_last(tp, s, tp.constant(nn::sinusoidal_embedding<T>(cn, 64)));
        e = nn::ops::silu(tp, dense2(tp, nn::ops::silu(tp, dense1(tp, e))));

        h = in_conv(tp, h);
        std::vector<nn::Var> skips;
        for (auto& blk : down) {
            h = blk(tp, h, e);
            skips.push_back(h);
        }
        for (auto& blk : up) {
            h = blk(tp, nn::ops::concat_last(tp, h, skips.back()), e);
            skips.pop_back();
        }
        nn::Var out = out_conv(tp, nn::ops::silu(tp, nn::ops::group_norm(tp, h, cfg.groups)));
        return nn::ops::add(tp, nn::ops::scale_rows(tp, x, cskip), nn::ops::scale_rows(tp, out, cout));
    }

    /// Gradient-free evaluation at a shared level.
    nn::Tensor<T> evaluate(const nn::Tensor<T>& x, double sigma, const nn::Tensor<T>* context,
                           const nn::Tensor<T>* style) {
        const std::size_t B = x.dim(0);
        nn::Tape<T> tp(false);
        nn::Var xv = tp.constant(x);
        nn::Var cv = context ? tp.constant(*context) : tp.constant(nn::Tensor<T>(x.shape()));
        nn::Var sv = style ? tp.constant(*style) : tp.constant(nn::Tensor<T>(nn::Shape{B, kStyle}));
        return tp.value(forward(tp, xv, std::vector<double>(B, sigma), cv, std::vector<bool>(B, context == nullptr), sv,
                                std::vector<bool>(B, style == nullptr)));
    }

    void save(const std::filesystem::path& path, const std::vector<nn::Tensor<T>>* ema_shadow,
              std::vector<nn::NamedTensor> extra = {}) {
        std::vector<nn::NamedTensor> recs = std::move(extra);
        recs.push_back({"meta/ldm/config",
                        nn::Tensor<float>(nn::Shape{6}, {float(cfg.width), float(cfg.blocks), float(cfg.embed),
                                                         float(cfg.kernel), float(cfg.groups), float(cfg.seed)})});
        recs.push_back({"meta/sigma_data", nn::Tensor<float>(nn::Shape{1}, {float(cfg.sigma_data)})});
        const auto ps = params();
        nn::append_params(recs, ps);
        if (ema_shadow) nn::append_shadow(recs, ps, *ema_shadow);
        nn::save_checkpoint(path, recs);
    }

    /// Loads a checkpoint; with `use_ema` the "ema/" shadow weights are used
    /// when present.
    static DenoiserModel load(const std::vector<nn::NamedTensor>& recs, bool use_ema = true) {
        const auto* c = nn::find_record(recs, "meta/ldm/config");
        const auto* sd = nn::find_record(recs, "meta/sigma_data");
        if (!c || c->size() != 6 || !sd || sd->size() != 1)
            throw MissingArtifactError("checkpoint has no diffusion model configuration records");
        DenoiserConfig cfg;
        cfg.width = static_cast<std::size_t>((*c)[0]);
        cfg.blocks = static_cast<std::size_t>((*c)[1]);
        cfg.embed = static_cast<std::size_t>((*c)[2]);
        cfg.kernel = static_cast<std::size_t>((*c)[3]);
        cfg.groups = static_cast<std::size_t>((*c)[4]);
        cfg.seed = static_cast<std::uint64_t>((*c)[5]);
        cfg.sigma_data = (*sd)[0];
        DenoiserModel m(cfg);
        const bool has_ema = nn::find_record(recs, "ema/" + m.params().front()->name) != nullptr;
        nn::load_params(m.params(), recs, use_ema && has_ema ? "ema/" : "");
        return m;
    }

private:
    double sd2() const { return cfg.sigma_data * cfg.sigma_data; }
};

/// Read-only Denoiser view of a float model.
class ModelDenoiser : public Denoiser {
public:
    explicit ModelDenoiser(DenoiserModel<float>& m) : m_(m) {}
    nn::Tensor<float> denoise(const nn::Tensor<float>& x, double sigma, const nn::Tensor<float>* context,
                              const nn::Tensor<float>* style) const override {
        return m_.evaluate(x, sigma, context, style);
    }

private:
    DenoiserModel<float>& m_;
};

}  // namespace darf::diffusion
