#pragma once

#include <cmath>
#include <vector>

#include "darf/diffusion/model.hpp"
#include "darf/nnkit/optim.hpp"
#include "darf/rng.hpp"

namespace darf::diffusion {

struct TrainConfig {
    double lr = 1e-4;
    std::size_t warmup_steps = 1000;
    double weight_decay = 1e-2;
    double p_drop_context = 0.5;
    double p_drop_style = 0.5;
    double log_sigma_mean = -1.2;
    double log_sigma_std = 1.2;
    double ema = 0.9999;
    bool ema_warmup = true;

    void validate() const {
        if (!(lr > 0)) throw ConfigError("ldm training: lr must be positive");
        if (!(p_drop_context >= 0 && p_drop_context <= 1 && p_drop_style >= 0 && p_drop_style <= 1))
            throw ConfigError("ldm training: dropout probabilities must lie in [0, 1]");
        if (!(log_sigma_std > 0)) throw ConfigError("ldm training: log_sigma_std must be positive");
        if (!(ema >= 0 && ema < 1)) throw ConfigError("ldm training: ema must lie in [0, 1)");
    }
};

/// One training batch: accompaniment targets and conditioning, all present;
/// dropout is decided by the trainer.
struct TrainBatch {
    nn::Tensor<float> target;   // (B, F, 64)
    nn::Tensor<float> context;  // (B, F, 64)
    nn::Tensor<float> style;    // (B, 64), from the target's style sub-segment
};

struct DropoutCounts {
    std::size_t items = 0;
    std::size_t context_null = 0;
    std::size_t style_null = 0;
    std::size_t both_null = 0;
};

/// Per-item draws of one step.
struct StepDraw {
    std::vector<double> sigma;
    std::vector<bool> context_null, style_null;
    nn::Tensor<float> noise;  // (B, F, 64), unit variance
};

/// Denoising score matching with independent conditioning dropout, AdamW and
/// an EMA shadow of the weights.
template <class T>
class Trainer {
public:
    Trainer(DenoiserModel<T>& model, TrainConfig cfg, std::uint64_t seed)
        : model_(model), cfg_(cfg), rng_(seed, {0x7a1}), params_(model.params()) {
        cfg_.validate();
        opt_.weight_decay = cfg_.weight_decay;
        sched_.base_lr = cfg_.lr;
        sched_.min_lr = std::min(sched_.min_lr, cfg_.lr);
        sched_.warmup_steps = cfg_.warmup_steps;
        ema_.momentum = cfg_.ema;
        ema_.warmup = cfg_.ema_warmup;
        ema_.initialize(params_);
    }

    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;

    StepDraw draw(std::size_t B, std::size_t F) {
        StepDraw d;
        d.noise = nn::Tensor<float>(nn::Shape{B, F, kLatent});
        for (std::size_t b = 0; b < B; ++b) {
            d.sigma.push_back(std::exp(cfg_.log_sigma_mean + cfg_.log_sigma_std * rng_.normal()));
            d.context_null.push_back(rng_.bernoulli(cfg_.p_drop_context));
            d.style_null.push_back(rng_.bernoulli(cfg_.p_drop_style));
        }
        for (auto& v : d.noise.data()) v = static_cast<float>(rng_.normal());
        return d;
    }

    /// Weighted denoising loss of one batch under a given draw, recorded on tp.
    nn::Var loss(nn::Tape<T>& tp, const TrainBatch& batch, const StepDraw& d) {
        const std::size_t B = batch.target.dim(0);
        nn::Tensor<T> x(batch.target.shape());
        const std::size_t per = x.size() / B;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t j = 0; j < per; ++j)
                x[b * per + j] = static_cast<T>(batch.target[b * per + j] + d.sigma[b] * d.noise[b * per + j]);
        nn::Var D = model_.forward(tp, tp.constant(std::move(x)), d.sigma, tp.constant(nn::cast<T>(batch.context)),
                                   d.context_null, tp.constant(nn::cast<T>(batch.style)), d.style_null);
        std::vector<T> w(B);
        for (std::size_t b = 0; b < B; ++b) w[b] = static_cast<T>(model_.loss_weight(d.sigma[b]));
        return nn::ops::mse(tp, D, tp.constant(nn::cast<T>(batch.target)), w);
    }

    /// One optimizer and EMA step. A non-finite loss skips the update and is
    /// counted in skipped(); the loss is returned either way.
    double step(const TrainBatch& batch) {
        if (batch.target.rank() != 3 || batch.context.shape() != batch.target.shape() ||
            batch.style.shape() != nn::Shape{batch.target.dim(0), kStyle})
            throw DimensionError("ldm batch: target " + nn::to_string(batch.target.shape()) + ", context " +
                                 nn::to_string(batch.context.shape()) + ", style " + nn::to_string(batch.style.shape()));
        const StepDraw d = draw(batch.target.dim(0), batch.target.dim(1));
        for (std::size_t b = 0; b < d.sigma.size(); ++b) {
            ++counts_.items;
            counts_.context_null += d.context_null[b];
            counts_.style_null += d.style_null[b];
            counts_.both_null += d.context_null[b] && d.style_null[b];
        }
        for (auto* p : params_) p->zero_grad();
        nn::Tape<T> tp;
        nn::Var L = loss(tp, batch, d);
        const double value = static_cast<double>(tp.value(L)[0]);
        if (!std::isfinite(value)) {
            ++skipped_;
            return value;
        }
        tp.backward(L);
        opt_.update(params_, sched_(steps_));
        ema_.update(params_);
        ++steps_;
        return value;
    }

    const DropoutCounts& dropout_counts() const { return counts_; }
    std::size_t steps() const { return steps_; }
    std::size_t skipped() const { return skipped_; }
    const nn::Ema<T>& ema() const { return ema_; }

private:
    DenoiserModel<T>& model_;
    TrainConfig cfg_;
    Rng rng_;
    nn::ParamList<T> params_;
    nn::AdamW<T> opt_;
    nn::LrSchedule sched_;
    nn::Ema<T> ema_;
    DropoutCounts counts_;
    std::size_t steps_ = 0, skipped_ = 0;
};

}  // namespace darf::diffusion
