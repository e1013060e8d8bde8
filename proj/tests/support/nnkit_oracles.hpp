#pragma once

#include <functional>
#include <memory>

#include "darf/nnkit/gradcheck.hpp"
#include "darf/nnkit/layers.hpp"

namespace darf::oracle::nnk {

using namespace darf::nn;

inline constexpr int kOpCases = 14;

template <class T>
Tensor<T> random_tensor(Shape s, Rng& rng, double scale = 1.0) {
    Tensor<T> t(std::move(s));
    for (auto& v : t.data()) v = static_cast<T>(rng.normal() * scale);
    return t;
}

// loss = Σ out ⊙ R for a fixed random R, so every output element matters.
template <class T>
Var project(Tape<T>& tp, Var out, const Tensor<T>& r) {
    return ops::sum(tp, ops::mul(tp, out, tp.constant(r)));
}

// Finite-difference check of one randomly shaped case of op `op` (0..13);
// returns the worst relative error.
template <class T>
double check_op_case(int op, Rng& rng, double h) {
    const std::size_t B = 1 + rng.below(3), L = 2 + rng.below(5), C = 2 * (1 + rng.below(3)), E = 1 + rng.below(4);
    Parameter<T> x("x", random_tensor<T>({B, L, C}, rng));
    Parameter<T> y("y", random_tensor<T>({B, L, C}, rng));
    ParamList<T> ps{&x};
    std::function<Var(Tape<T>&)> fn;
    switch (op) {
        case 0: {  // linear
            const std::size_t out = 1 + rng.below(5);
            auto w = std::make_shared<Parameter<T>>("w", random_tensor<T>({C, out}, rng));
            auto b = std::make_shared<Parameter<T>>("b", random_tensor<T>({out}, rng));
            ps = {&x, w.get(), b.get()};
            auto r = random_tensor<T>({B, L, out}, rng);
            fn = [&x, w, b, r](Tape<T>& tp) {
                return project(tp, ops::linear(tp, tp.parameter(x), tp.parameter(*w), tp.parameter(*b)), r);
            };
            // keep w, b alive for the check
            return grad_check<T>(ps, fn, h).max_rel_error;
        }
        case 1: {  // conv1d with varying stride / padding
            const std::size_t K = 1 + rng.below(3), S = 1 + rng.below(2), P = rng.below(2);
            const std::size_t out = 1 + rng.below(4);
            auto w = std::make_shared<Parameter<T>>("w", random_tensor<T>({K, C, out}, rng));
            auto b = std::make_shared<Parameter<T>>("b", random_tensor<T>({out}, rng));
            ps = {&x, w.get(), b.get()};
            const std::size_t Lout = (L + 2 * P - K) / S + 1;
            auto r = random_tensor<T>({B, Lout, out}, rng);
            fn = [&x, w, b, r, S, P](Tape<T>& tp) {
                return project(tp, ops::conv1d(tp, tp.parameter(x), tp.parameter(*w), tp.parameter(*b), S, P), r);
            };
            return grad_check<T>(ps, fn, h).max_rel_error;
        }
        case 2: {  // strided patch conv (reshape fast path)
            auto xp = std::make_shared<Parameter<T>>("xp", random_tensor<T>({B, 4, C}, rng));
            auto w = std::make_shared<Parameter<T>>("w", random_tensor<T>({2, C, 3}, rng));
            auto r = random_tensor<T>({B, 2, 3}, rng);
            ps = {xp.get(), w.get()};
            fn = [xp, w, r](Tape<T>& tp) {
                return project(tp, ops::conv1d(tp, tp.parameter(*xp), tp.parameter(*w), Var{}, 2, 0), r);
            };
            return grad_check<T>(ps, fn, h).max_rel_error;
        }
        case 3: {
            auto r = random_tensor<T>({B, L, C}, rng);
            const std::size_t G = (C % 2 == 0 && rng.bernoulli(0.5)) ? 2 : 1;
            fn = [&x, r, G](Tape<T>& tp) { return project(tp, ops::group_norm(tp, tp.parameter(x), G), r); };
            break;
        }
        case 4: {
            auto r = random_tensor<T>({B, L, C}, rng);
            fn = [&x, r](Tape<T>& tp) { return project(tp, ops::silu(tp, tp.parameter(x)), r); };
            break;
        }
        case 5: {
            auto r = random_tensor<T>({B, L, C}, rng);
            fn = [&x, r](Tape<T>& tp) { return project(tp, ops::tanh(tp, tp.parameter(x)), r); };
            break;
        }
        case 6: {  // film through projections
            auto e = std::make_shared<Parameter<T>>("e", random_tensor<T>({B, E}, rng));
            auto proj = std::make_shared<FilmProj<T>>("f", E, C, rng);
            for (auto* p : ParamList<T>{&proj->gamma.weight, &proj->beta.weight, &proj->gamma.bias, &proj->beta.bias})
                p->value = random_tensor<T>(p->value.shape(), rng, 0.5);
            ps = {&x, e.get()};
            proj->collect(ps);
            auto r = random_tensor<T>({B, L, C}, rng);
            fn = [&x, e, proj, r](Tape<T>& tp) {
                return project(tp, film_modulate(tp, tp.parameter(x), tp.parameter(*e), *proj), r);
            };
            return grad_check<T>(ps, fn, h).max_rel_error;
        }
        case 7: {
            ps = {&x, &y};
            auto r = random_tensor<T>({B, L, C}, rng);
            fn = [&x, &y, r](Tape<T>& tp) { return project(tp, ops::add(tp, tp.parameter(x), tp.parameter(y)), r); };
            break;
        }
        case 8: {
            ps = {&x, &y};
            auto r = random_tensor<T>({B, L, C}, rng);
            fn = [&x, &y, r](Tape<T>& tp) { return project(tp, ops::mul(tp, tp.parameter(x), tp.parameter(y)), r); };
            break;
        }
        case 9: {
            ps = {&x, &y};
            std::vector<T> w(B);
            for (auto& v : w) v = static_cast<T>(rng.uniform(0.1, 2.0));
            fn = [&x, &y, w](Tape<T>& tp) { return ops::mse(tp, tp.parameter(x), tp.parameter(y), w); };
            break;
        }
        case 10: {
            auto r = random_tensor<T>({B, L, C + C}, rng);
            ps = {&x, &y};
            fn = [&x, &y, r](Tape<T>& tp) {
                return project(tp, ops::concat_last(tp, tp.parameter(x), tp.parameter(y)), r);
            };
            break;
        }
        case 11: {
            const std::size_t f = 1 + rng.below(3);
            auto r = random_tensor<T>({B, L * f, C}, rng);
            fn = [&x, r, f](Tape<T>& tp) { return project(tp, ops::upsample(tp, tp.parameter(x), f), r); };
            break;
        }
        case 12: {
            std::vector<T> s(B);
            for (auto& v : s) v = static_cast<T>(rng.normal());
            auto r = random_tensor<T>({B, L, C}, rng);
            fn = [&x, r, s](Tape<T>& tp) {
                auto z = ops::scale(tp, ops::scale_rows(tp, tp.parameter(x), s), T(0.7));
                return project(tp, ops::sub(tp, z, tp.parameter(x)), r);
            };
            break;
        }
        default: {  // select_rows + reshape
            auto d = std::make_shared<Parameter<T>>("d", random_tensor<T>({B, E}, rng));
            auto nul = std::make_shared<Parameter<T>>("null", random_tensor<T>({E}, rng));
            std::vector<bool> mask(B);
            for (std::size_t b = 0; b < B; ++b) mask[b] = rng.bernoulli(0.5);
            auto r = random_tensor<T>({B * E}, rng);
            ps = {d.get(), nul.get()};
            fn = [d, nul, mask, r, B, E](Tape<T>& tp) {
                auto s = ops::select_rows(tp, tp.parameter(*d), tp.parameter(*nul), mask);
                return project(tp, ops::reshape(tp, s, Shape{B * E}), r);
            };
            return grad_check<T>(ps, fn, h).max_rel_error;
        }
    }
    return grad_check<T>(ps, fn, h).max_rel_error;
}

}  // namespace darf::oracle::nnk
