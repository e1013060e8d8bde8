#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "darf/nnkit/tape.hpp"

namespace darf::nn {

struct GradCheckResult {
    double max_rel_error = 0.0;  // max over parameters of ‖analytic − numeric‖∞ / max(‖numeric‖∞, floor)
    std::string worst_param;
};

/// Compares tape gradients of `loss_fn` against central finite differences for
/// every element of every parameter in `ps`.
template <class T>
GradCheckResult grad_check(const ParamList<T>& ps, const std::function<Var(Tape<T>&)>& loss_fn, double h = 1e-6,
                           double floor = 1e-8) {
    zero_grads(ps);
    {
        Tape<T> tp;
        tp.backward(loss_fn(tp));
    }
    auto eval = [&]() {
        Tape<T> tp(false);
        return static_cast<double>(tp.value(loss_fn(tp))[0]);
    };
    GradCheckResult res;
    for (auto* p : ps) {
        double max_diff = 0.0, max_num = 0.0;
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const T orig = p->value[i];
            p->value[i] = static_cast<T>(orig + h);
            const double fp = eval();
            p->value[i] = static_cast<T>(orig - h);
            const double fm = eval();
            p->value[i] = orig;
            const double num = (fp - fm) / (2.0 * h);
            max_diff = std::max(max_diff, std::abs(num - static_cast<double>(p->grad[i])));
            max_num = std::max(max_num, std::abs(num));
        }
        const double rel = max_diff / std::max(max_num, floor);
        if (rel > res.max_rel_error) {
            res.max_rel_error = rel;
            res.worst_param = p->name;
        }
    }
    return res;
}

}  // namespace darf::nn
