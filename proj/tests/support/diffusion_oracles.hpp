#pragma once

#include <cmath>
#include <vector>

#include "darf/diffusion/model.hpp"
#include "darf/diffusion/sampler.hpp"

namespace darf::oracle::diff {

using namespace darf::diffusion;

/// Exact denoiser for data ~ N(μ, s²I): E[x₀ | x] = μ + s²/(s²+σ²)·(x − μ).
class GaussianOracle : public Denoiser {
public:
    GaussianOracle(std::vector<double> mu, double s) : mu_(std::move(mu)), s_(s) {}
    nn::Tensor<float> denoise(const nn::Tensor<float>& x, double sigma, const nn::Tensor<float>*,
                              const nn::Tensor<float>*) const override {
        nn::Tensor<float> d(x.shape());
        const double k = s_ * s_ / (s_ * s_ + sigma * sigma);
        const std::size_t C = x.dim(2);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double m = mu_[i % C];
            d[i] = static_cast<float>(m + k * (x[i] - m));
        }
        return d;
    }

private:
    std::vector<double> mu_;
    double s_;
};

/// Returns a constant per conditioning combination.
class ScalarStub : public Denoiser {
public:
    double none = 0, ctx = 1, full = 3, style_only = 2;
    nn::Tensor<float> denoise(const nn::Tensor<float>& x, double, const nn::Tensor<float>* c,
                              const nn::Tensor<float>* s) const override {
        const double v = c && s ? full : c ? ctx : s ? style_only : none;
        return nn::Tensor<float>(x.shape(), static_cast<float>(v));
    }
};

class ConstantData : public Denoiser {
public:
    explicit ConstantData(float c) : c_(c) {}
    nn::Tensor<float> denoise(const nn::Tensor<float>& x, double, const nn::Tensor<float>*,
                              const nn::Tensor<float>*) const override {
        return nn::Tensor<float>(x.shape(), c_);
    }

private:
    float c_;
};

inline DenoiserConfig tiny() {
    DenoiserConfig c;
    c.width = 8;
    c.blocks = 1;
    c.embed = 16;
    c.groups = 4;
    return c;
}

inline nn::Tensor<float> randn(nn::Shape s, std::uint64_t seed, double scale = 1.0) {
    nn::Tensor<float> t(std::move(s));
    Rng r(seed);
    for (auto& v : t.data()) v = static_cast<float>(scale * r.normal());
    return t;
}

inline nn::Tensor<float> unit_rows(std::size_t B, std::uint64_t seed) {
    auto t = randn(nn::Shape{B, kStyle}, seed);
    for (std::size_t b = 0; b < B; ++b) {
        double n = 0;
        for (std::size_t k = 0; k < kStyle; ++k) n += double(t.at(b, k)) * t.at(b, k);
        for (std::size_t k = 0; k < kStyle; ++k) t.at(b, k) = static_cast<float>(t.at(b, k) / std::sqrt(n));
    }
    return t;
}

struct Moments {
    std::vector<double> mean, var;
};

inline Moments moments(const nn::Tensor<float>& x) {
    const std::size_t C = x.dim(2), n = x.size() / C;
    Moments m{std::vector<double>(C, 0.0), std::vector<double>(C, 0.0)};
    for (std::size_t i = 0; i < x.size(); ++i) m.mean[i % C] += x[i] / double(n);
    for (std::size_t i = 0; i < x.size(); ++i) m.var[i % C] += std::pow(x[i] - m.mean[i % C], 2) / double(n - 1);
    return m;
}

}  // namespace darf::oracle::diff
