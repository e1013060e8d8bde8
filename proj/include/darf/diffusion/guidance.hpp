#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "darf/diffusion/model.hpp"
#include "darf/error.hpp"

namespace darf::diffusion {

/// Conditioning for a batch of B items. Absent sources are represented by the
/// model's null tokens, never by data.
struct ConditioningBundle {
    std::optional<nn::Tensor<float>> context;  // (B, F, 64)
    std::optional<nn::Tensor<float>> style;    // (B, 64)
    double cfg_context = 1.0;
    double cfg_style = 1.0;

    void validate(const nn::Shape& x_shape) const {
        if (cfg_context < 0 || cfg_style < 0) throw ConfigError("guidance strengths must be non-negative");
        if (context && context->shape() != x_shape)
            throw DimensionError("context " + nn::to_string(context->shape()) + " does not match latents " +
                                 nn::to_string(x_shape));
        if (style && style->shape() != nn::Shape{x_shape.at(0), kStyle})
            throw DimensionError("style " + nn::to_string(style->shape()) + " does not match batch of " +
                                 std::to_string(x_shape.at(0)));
    }

    /// Rows [begin, begin + n) of every present source.
    ConditioningBundle slice(std::size_t begin, std::size_t n) const {
        auto rows = [&](const nn::Tensor<float>& t) {
            nn::Shape s = t.shape();
            const std::size_t per = t.size() / s[0];
            s[0] = n;
            return nn::Tensor<float>(s, std::vector<float>(t.raw() + begin * per, t.raw() + (begin + n) * per));
        };
        ConditioningBundle out;
        out.cfg_context = cfg_context;
        out.cfg_style = cfg_style;
        if (context) out.context = rows(*context);
        if (style) out.style = rows(*style);
        return out;
    }
};

/// Two-source classifier-free guidance on the denoised estimate:
///   f∅ + c_ctx·(f_ctx − f∅) + c_sty·(f_full − f_ctx)
/// with f∅ = D(x, null, null), f_ctx = D(x, context, null), f_full = D(x, context, style).
/// An absent source makes its difference term vanish (f_ctx = f∅ without
/// context; f_full = f_ctx without style). When every present strength is 1 the
/// result is f_full itself; when every present strength is 0 it is f∅ itself.
inline nn::Tensor<float> guided_denoise(const nn::Tensor<float>& x, double sigma, const ConditioningBundle& cond,
                                        const Denoiser& model) {
    cond.validate(x.shape());
    const nn::Tensor<float>* ctx = cond.context ? &*cond.context : nullptr;
    const nn::Tensor<float>* sty = cond.style ? &*cond.style : nullptr;
    const bool all_one = (!ctx || cond.cfg_context == 1.0) && (!sty || cond.cfg_style == 1.0);
    const bool all_zero = (!ctx || cond.cfg_context == 0.0) && (!sty || cond.cfg_style == 0.0);
    if (all_one) return model.denoise(x, sigma, ctx, sty);
    if (all_zero) return model.denoise(x, sigma, nullptr, nullptr);

    const nn::Tensor<float> f_null = model.denoise(x, sigma, nullptr, nullptr);
    const nn::Tensor<float> f_ctx = ctx ? model.denoise(x, sigma, ctx, nullptr) : f_null;
    const nn::Tensor<float> f_full = sty ? model.denoise(x, sigma, ctx, sty) : f_ctx;
    const double a = ctx ? cond.cfg_context : 0.0, b = sty ? cond.cfg_style : 0.0;
    nn::Tensor<float> out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double n = f_null[i], c = f_ctx[i], f = f_full[i];
        out[i] = static_cast<float>(n + a * (c - n) + b * (f - c));
    }
    return out;
}

/// Spherical interpolation between the directions of e1 and e2, unit norm.
inline std::vector<double> interpolate_style(const std::vector<double>& e1, const std::vector<double>& e2, double alpha) {
    if (e1.size() != e2.size()) throw DimensionError("interpolate_style: embedding sizes differ");
    if (!(alpha >= 0 && alpha <= 1)) throw ConfigError("interpolate_style: alpha must lie in [0, 1]");
    auto unit = [](std::vector<double> v) {
        double n = 0;
        for (double x : v) n += x * x;
        n = std::sqrt(n);
        if (!(n > 0)) throw NumericalError("interpolate_style: zero-norm embedding");
        for (double& x : v) x /= n;
        return v;
    };
    const auto a = unit(e1), b = unit(e2);
    if (alpha == 0) return a;
    if (alpha == 1) return b;
    double c = 0;
    for (std::size_t i = 0; i < a.size(); ++i) c += a[i] * b[i];
    c = std::clamp(c, -1.0, 1.0);
    const double omega = std::acos(c);
    std::vector<double> out(a.size());
    if (std::sin(omega) < 1e-12) {  // parallel: linear blend is exact
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = (1 - alpha) * a[i] + alpha * b[i];
        return unit(std::move(out));
    }
    const double wa = std::sin((1 - alpha) * omega) / std::sin(omega), wb = std::sin(alpha * omega) / std::sin(omega);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = wa * a[i] + wb * b[i];
    return unit(std::move(out));
}

}  // namespace darf::diffusion
