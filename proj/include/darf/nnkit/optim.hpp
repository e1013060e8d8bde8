#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "darf/error.hpp"
#include "darf/nnkit/tensor.hpp"

namespace darf::nn {

/// AdamW with decoupled weight decay. The defaults are this project's choice;
/// only the learning rate has a published value (1e-4).
template <class T>
struct AdamW {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;
    std::size_t step = 0;
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;

    /// One update using the populated gradients. Gradients are left untouched.
    /// A non-finite gradient aborts the whole step before any value changes.
    void update(const ParamList<T>& ps, double step_lr) {
        for (const auto* p : ps) {
            if (p->grad.shape() != p->value.shape())
                throw DimensionError("adamw: gradient of " + p->name + " has shape " + to_string(p->grad.shape()));
            if (!p->grad.all_finite()) throw NumericalError("adamw: non-finite gradient in parameter " + p->name);
        }
        if (m.size() != ps.size()) {
            m.clear();
            v.clear();
            for (const auto* p : ps) {
                m.emplace_back(p->value.shape());
                v.emplace_back(p->value.shape());
            }
        }
        ++step;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        const T decay = static_cast<T>(1.0 - step_lr * weight_decay);
        for (std::size_t i = 0; i < ps.size(); ++i) {
            auto& val = ps[i]->value;
            const auto& g = ps[i]->grad;
            auto& mi = m[i];
            auto& vi = v[i];
            for (std::size_t j = 0; j < val.size(); ++j) {
                if (weight_decay != 0.0) val[j] *= decay;
                mi[j] = static_cast<T>(beta1 * mi[j] + (1.0 - beta1) * g[j]);
                vi[j] = static_cast<T>(beta2 * vi[j] + (1.0 - beta2) * g[j] * g[j]);
                const double mhat = mi[j] / bc1;
                const double vhat = vi[j] / bc2;
                val[j] = static_cast<T>(val[j] - step_lr * mhat / (std::sqrt(vhat) + eps));
            }
        }
    }

    void update(const ParamList<T>& ps) { update(ps, lr); }
};

/// Exponential moving average of parameter values.
///
/// With `warmup` set the effective momentum is min(momentum, (1+n)/(10+n))
/// after n updates, so short runs are not dominated by the initial weights.
template <class T>
struct Ema {
    double momentum = 0.9999;
    bool warmup = false;
    std::size_t updates = 0;
    std::vector<Tensor<T>> shadow;

    bool initialized() const { return !shadow.empty(); }

    void initialize(const ParamList<T>& ps) {
        shadow.clear();
        for (const auto* p : ps) shadow.push_back(p->value);
    }

    double effective_momentum() const {
        if (!warmup) return momentum;
        const double n = static_cast<double>(updates);
        return std::min(momentum, (1.0 + n) / (10.0 + n));
    }

    void update(const ParamList<T>& ps) {
        if (!initialized()) {
            initialize(ps);
            ++updates;
            return;
        }
        if (shadow.size() != ps.size()) throw DimensionError("ema: parameter count changed");
        const T mu = static_cast<T>(effective_momentum());
        const T one_minus = static_cast<T>(1.0 - effective_momentum());
        for (std::size_t i = 0; i < ps.size(); ++i) {
            ps[i]->value.check_same(shadow[i], "ema");
            for (std::size_t j = 0; j < shadow[i].size(); ++j)
                shadow[i][j] = mu * shadow[i][j] + one_minus * ps[i]->value[j];
        }
        ++updates;
    }

    /// Copies the shadow weights into the parameters.
    void apply_to(const ParamList<T>& ps) const {
        for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = shadow.at(i);
    }
};

/// Linear warm-up followed by reduce-on-plateau, clamped to [min_lr, base_lr].
struct LrSchedule {
    double base_lr = 1e-4;
    double min_lr = 1e-6;
    std::size_t warmup_steps = 1000;
    std::size_t plateau_patience = 10;
    double plateau_factor = 0.5;

    double scale = 1.0;
    double best = std::numeric_limits<double>::infinity();
    std::size_t bad_evals = 0;

    /// Learning rate for `step`. A plateau signal (lower is better) counts as one
    /// evaluation; `patience` evaluations without improvement cut the rate.
    double operator()(std::size_t step, std::optional<double> plateau_signal = std::nullopt) {
        if (plateau_signal && step >= warmup_steps) {
            if (*plateau_signal < best) {
                best = *plateau_signal;
                bad_evals = 0;
            } else if (++bad_evals >= plateau_patience) {
                scale *= plateau_factor;
                bad_evals = 0;
            }
        }
        double lr = base_lr * scale;
        if (step < warmup_steps)
            lr = base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
        return std::clamp(lr, min_lr, base_lr);
    }
};

}  // namespace darf::nn
