#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "darf/nnkit/gemm.hpp"
#include "darf/nnkit/tape.hpp"

// Op vocabulary: linear, conv1d, group_norm, silu, tanh, film, add, sub, mul,
// scale, scale_rows, concat_last, upsample, reshape, select_rows, sum, mse.
// Sequence tensors are (batch, length, channels).

namespace darf::nn::ops {

namespace detail {

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw DimensionError(msg);
}

template <class T>
T sigmoid(T x) {
    return T{1} / (T{1} + std::exp(-x));
}

}  // namespace detail

/// y = x·w + b over the last axis of x. w is (in, out), b is (out) or invalid.
template <class T>
Var linear(Tape<T>& tp, Var x, Var w, Var b = {}) {
    const Shape& xs = tp.shape(x);
    const Shape& ws = tp.shape(w);
    detail::require(!xs.empty() && ws.size() == 2 && xs.back() == ws[0],
                    "linear: input " + to_string(xs) + " incompatible with weight " + to_string(ws));
    if (b.valid())
        detail::require(tp.shape(b) == Shape{ws[1]},
                        "linear: bias " + to_string(tp.shape(b)) + " incompatible with weight " + to_string(ws));
    const long in = static_cast<long>(ws[0]), out = static_cast<long>(ws[1]);
    const long m = static_cast<long>(tp.value(x).size()) / in;
    Shape ys = xs;
    ys.back() = ws[1];
    Tensor<T> y(ys);
    blas::gemm(tp.value(x).raw(), tp.value(w).raw(), y.raw(), m, in, out);
    if (b.valid()) {
        const T* bb = tp.value(b).raw();
        for (long i = 0; i < m; ++i)
            for (long j = 0; j < out; ++j) y[i * out + j] += bb[j];
    }
    return tp.push(std::move(y), {x, w, b.valid() ? b : x}, [=](Tape<T>& t, const Tensor<T>& gy) {
        if (t.needs_grad(x)) blas::gemm_nt(gy.raw(), t.value(w).raw(), t.grad(x).raw(), m, out, in, true);
        if (t.needs_grad(w)) blas::gemm_tn_acc(t.value(x).raw(), gy.raw(), t.grad(w).raw(), m, in, out);
        if (b.valid() && t.needs_grad(b)) {
            T* gb = t.grad(b).raw();
            for (long i = 0; i < m; ++i)
                for (long j = 0; j < out; ++j) gb[j] += gy[i * out + j];
        }
    });
}

/// 1-D convolution over the length axis. x (B, L, Cin), w (K, Cin, Cout), b (Cout) or invalid.
template <class T>
Var conv1d(Tape<T>& tp, Var x, Var w, Var b, std::size_t stride = 1, std::size_t pad = 0) {
    const Shape& xs = tp.shape(x);
    const Shape& ws = tp.shape(w);
    detail::require(xs.size() == 3 && ws.size() == 3 && xs[2] == ws[1],
                    "conv1d: input " + to_string(xs) + " incompatible with weight " + to_string(ws));
    detail::require(stride >= 1 && xs[1] + 2 * pad >= ws[0],
                    "conv1d: input length too short for kernel in " + to_string(xs));
    if (b.valid())
        detail::require(tp.shape(b) == Shape{ws[2]},
                        "conv1d: bias " + to_string(tp.shape(b)) + " incompatible with weight " + to_string(ws));
    const long B = static_cast<long>(xs[0]), L = static_cast<long>(xs[1]), Cin = static_cast<long>(xs[2]);
    const long K = static_cast<long>(ws[0]), Cout = static_cast<long>(ws[2]);
    const long S = static_cast<long>(stride), P = static_cast<long>(pad);
    const long Lout = (L + 2 * P - K) / S + 1;
    const long rows = B * Lout, cols = K * Cin;

    const bool direct = (K == S && P == 0 && L % K == 0);  // non-overlapping patches: im2col is a reshape
    std::vector<T> col;
    if (!direct) {
        col.assign(static_cast<std::size_t>(rows * cols), T{0});
        const T* xv = tp.value(x).raw();
        for (long bi = 0; bi < B; ++bi)
            for (long o = 0; o < Lout; ++o) {
                T* dst = col.data() + (bi * Lout + o) * cols;
                for (long k = 0; k < K; ++k) {
                    const long src = o * S + k - P;
                    if (src < 0 || src >= L) continue;
                    std::copy_n(xv + (bi * L + src) * Cin, Cin, dst + k * Cin);
                }
            }
    }
    Tensor<T> y(Shape{xs[0], static_cast<std::size_t>(Lout), ws[2]});
    blas::gemm(direct ? tp.value(x).raw() : col.data(), tp.value(w).raw(), y.raw(), rows, cols, Cout);
    if (b.valid()) {
        const T* bb = tp.value(b).raw();
        for (long i = 0; i < rows; ++i)
            for (long j = 0; j < Cout; ++j) y[i * Cout + j] += bb[j];
    }
    return tp.push(std::move(y), {x, w, b.valid() ? b : x},
                   [=, col = std::move(col)](Tape<T>& t, const Tensor<T>& gy) {
                       const T* colp = direct ? t.value(x).raw() : col.data();
                       if (t.needs_grad(w)) blas::gemm_tn_acc(colp, gy.raw(), t.grad(w).raw(), rows, cols, Cout);
                       if (b.valid() && t.needs_grad(b)) {
                           T* gb = t.grad(b).raw();
                           for (long i = 0; i < rows; ++i)
                               for (long j = 0; j < Cout; ++j) gb[j] += gy[i * Cout + j];
                       }
                       if (!t.needs_grad(x)) return;
                       if (direct) {
                           blas::gemm_nt(gy.raw(), t.value(w).raw(), t.grad(x).raw(), rows, Cout, cols, true);
                           return;
                       }
                       std::vector<T> gcol(static_cast<std::size_t>(rows * cols));
                       blas::gemm_nt(gy.raw(), t.value(w).raw(), gcol.data(), rows, Cout, cols);
                       T* gx = t.grad(x).raw();
                       for (long bi = 0; bi < B; ++bi)
                           for (long o = 0; o < Lout; ++o) {
                               const T* src = gcol.data() + (bi * Lout + o) * cols;
                               for (long k = 0; k < K; ++k) {
                                   const long dst = o * S + k - P;
                                   if (dst < 0 || dst >= L) continue;
                                   T* g = gx + (bi * L + dst) * Cin;
                                   for (long c = 0; c < Cin; ++c) g[c] += src[k * Cin + c];
                               }
                           }
                   });
}

/// Group normalization without affine terms over (length, channels-in-group).
/// Scale and shift come from FiLM downstream.
template <class T>
Var group_norm(Tape<T>& tp, Var x, std::size_t groups, T eps = T(1e-5)) {
    const Shape& xs = tp.shape(x);
    detail::require(xs.size() == 3 && groups > 0 && xs[2] % groups == 0,
                    "group_norm: channels of " + to_string(xs) + " not divisible into " + std::to_string(groups) +
                        " groups");
    const std::size_t B = xs[0], L = xs[1], C = xs[2], G = groups, cg = C / G;
    const T inv_n = T{1} / static_cast<T>(L * cg);
    const Tensor<T>& xv = tp.value(x);
    Tensor<T> y(xs);
    std::vector<T> rstd(B * G);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t g = 0; g < G; ++g) {
            T mean = 0, var = 0;
            for (std::size_t l = 0; l < L; ++l)
                for (std::size_t c = g * cg; c < (g + 1) * cg; ++c) mean += xv.at(b, l, c);
            mean *= inv_n;
            for (std::size_t l = 0; l < L; ++l)
                for (std::size_t c = g * cg; c < (g + 1) * cg; ++c) {
                    const T d = xv.at(b, l, c) - mean;
                    var += d * d;
                }
            var *= inv_n;
            const T r = T{1} / std::sqrt(var + eps);
            rstd[b * G + g] = r;
            for (std::size_t l = 0; l < L; ++l)
                for (std::size_t c = g * cg; c < (g + 1) * cg; ++c) y.at(b, l, c) = (xv.at(b, l, c) - mean) * r;
        }
    const Var out{tp.size()};
    tp.push(std::move(y), {x}, [=, rstd = std::move(rstd)](Tape<T>& t, const Tensor<T>& gy) {
        const Tensor<T>& yv = t.value(out);
        Tensor<T>& gx = t.grad(x);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t g = 0; g < G; ++g) {
                T mg = 0, mgy = 0;
                for (std::size_t l = 0; l < L; ++l)
                    for (std::size_t c = g * cg; c < (g + 1) * cg; ++c) {
                        mg += gy.at(b, l, c);
                        mgy += gy.at(b, l, c) * yv.at(b, l, c);
                    }
                mg *= inv_n;
                mgy *= inv_n;
                const T r = rstd[b * G + g];
                for (std::size_t l = 0; l < L; ++l)
                    for (std::size_t c = g * cg; c < (g + 1) * cg; ++c)
                        gx.at(b, l, c) += r * (gy.at(b, l, c) - mg - yv.at(b, l, c) * mgy);
            }
    });
    return out;
}

template <class T>
Var silu(Tape<T>& tp, Var x) {
    const Tensor<T>& xv = tp.value(x);
    Tensor<T> y(xv.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * detail::sigmoid(xv[i]);
    return tp.push(std::move(y), {x}, [=](Tape<T>& t, const Tensor<T>& gy) {
        const Tensor<T>& xin = t.value(x);
        Tensor<T>& gx = t.grad(x);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            const T s = detail::sigmoid(xin[i]);
            gx[i] += gy[i] * s * (T{1} + xin[i] * (T{1} - s));
        }
    });
}

/// tanh with outputs held strictly inside (-1, 1) even where the rounded
/// result would reach ±1.
template <class T>
Var tanh(Tape<T>& tp, Var x) {
    constexpr T hi = T{1} - std::numeric_limits<T>::epsilon() / 2;
    const Tensor<T>& xv = tp.value(x);
    Tensor<T> y(xv.shape());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::clamp(std::tanh(xv[i]), -hi, hi);
    const Var out{tp.size()};
    tp.push(std::move(y), {x}, [=](Tape<T>& t, const Tensor<T>& gy) {
        const Tensor<T>& yv = t.value(out);
        Tensor<T>& gx = t.grad(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * (T{1} - yv[i] * yv[i]);
    });
    return out;
}

/// Feature-wise modulation y = h·(1+γ) + β. h (B, L, C); γ, β (B, C).
template <class T>
Var film(Tape<T>& tp, Var h, Var gamma, Var beta) {
    const Shape& hs = tp.shape(h);
    detail::require(hs.size() == 3, "film: features must be (batch, length, channels), got " + to_string(hs));
    const Shape want{hs[0], hs[2]};
    detail::require(tp.shape(gamma) == want && tp.shape(beta) == want,
                    "film: modulation shapes " + to_string(tp.shape(gamma)) + "/" + to_string(tp.shape(beta)) +
                        " do not match features " + to_string(hs));
    const std::size_t B = hs[0], L = hs[1], C = hs[2];
    const Tensor<T>& hv = tp.value(h);
    const Tensor<T>& gv = tp.value(gamma);
    const Tensor<T>& bv = tp.value(beta);
    Tensor<T> y(hs);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t c = 0; c < C; ++c)
                y.at(b, l, c) = hv.at(b, l, c) * (T{1} + gv.at(b, c)) + bv.at(b, c);
    return tp.push(std::move(y), {h, gamma, beta}, [=](Tape<T>& t, const Tensor<T>& gy) {
        const Tensor<T>& hin = t.value(h);
        const Tensor<T>& gam = t.value(gamma);
        if (t.needs_grad(h)) {
            Tensor<T>& gh = t.grad(h);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t l = 0; l < L; ++l)
                    for (std::size_t c = 0; c < C; ++c) gh.at(b, l, c) += gy.at(b, l, c) * (T{1} + gam.at(b, c));
        }
        if (t.needs_grad(gamma)) {
            Tensor<T>& gg = t.grad(gamma);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t l = 0; l < L; ++l)
                    for (std::size_t c = 0; c < C; ++c) gg.at(b, c) += gy.at(b, l, c) * hin.at(b, l, c);
        }
        if (t.needs_grad(beta)) {
            Tensor<T>& gb = t.grad(beta);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t l = 0; l < L; ++l)
                    for (std::size_t c = 0; c < C; ++c) gb.at(b, c) += gy.at(b, l, c);
        }
    });
}

template <class T>
Var add(Tape<T>& tp, Var a, Var b) {
    tp.value(a).check_same(tp.value(b), "add");
    Tensor<T> y = tp.value(a);
    y += tp.value(b);
    return tp.push(std::move(y), {a, b}, [=](Tape<T>& t, const Tensor<T>& gy) {
        if (t.needs_grad(a)) t.grad(a) += gy;
        if (t.needs_grad(b)) t.grad(b) += gy;
    });
}

template <class T>
Var sub(Tape<T>& tp, Var a, Var b) {
    tp.value(a).check_same(tp.value(b), "sub");
    Tensor<T> y = tp.value(a);
    const Tensor<T>& bv = tp.value(b);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
    return tp.push(std::move(y), {a, b}, [=](Tape<T>& t, const Tensor<T>& gy) {
        if (t.needs_grad(a)) t.grad(a) += gy;
        if (t.needs_grad(b)) {
            Tensor<T>& g = t.grad(b);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= gy[i];
        }
    });
}

template <class T>
Var mul(Tape<T>& tp, Var a, Var b) {
    tp.value(a).check_same(tp.value(b), "mul");
    Tensor<T> y = tp.value(a);
    const Tensor<T>& bv = tp.value(b);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
    return tp.push(std::move(y), {a, b}, [=](Tape<T>& t, const Tensor<T>& gy) {
        if (t.needs_grad(a)) {
            Tensor<T>& g = t.grad(a);
            const Tensor<T>& o = t.value(b);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * o[i];
        }
        if (t.needs_grad(b)) {
            Tensor<T>& g = t.grad(b);
            const Tensor<T>& o = t.value(a);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * o[i];
        }
    });
}

template <class T>
Var scale(Tape<T>& tp, Var x, T s) {
    Tensor<T> y = tp.value(x);
    for (auto& v : y.data()) v *= s;
    return tp.push(std::move(y), {x}, [=](Tape<T>& t, const Tensor<T>& gy) {
        Tensor<T>& g = t.grad(x);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * s;
    });
}

/// Multiplies every element of batch item b by the constant s[b].
template <class T>
Var scale_rows(Tape<T>& tp, Var x, std::vector<T> s) {
    const Shape& xs = tp.shape(x);
    detail::require(!xs.empty() && xs[0] == s.size(),
                    "scale_rows: " + std::to_string(s.size()) + " factors for batch of " + to_string(xs));
    const std::size_t per = tp.value(x).size() / xs[0];
    Tensor<T> y = tp.value(x);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= s[i / per];
    return tp.push(std::move(y), {x}, [=, s = std::move(s)](Tape<T>& t, const Tensor<T>& gy) {
        Tensor<T>& g = t.grad(x);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i] * s[i / per];
    });
}

/// Concatenates along the last axis; leading axes must agree.
template <class T>
Var concat_last(Tape<T>& tp, Var a, Var b) {
    Shape as = tp.shape(a), bs = tp.shape(b);
    detail::require(as.size() == bs.size() && !as.empty() && std::equal(as.begin(), as.end() - 1, bs.begin()),
                    "concat_last: " + to_string(as) + " vs " + to_string(bs));
    const std::size_t ca = as.back(), cb = bs.back(), rows = tp.value(a).size() / ca;
    Shape ys = as;
    ys.back() = ca + cb;
    Tensor<T> y(ys);
    const T* av = tp.value(a).raw();
    const T* bv = tp.value(b).raw();
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(av + r * ca, ca, y.raw() + r * (ca + cb));
        std::copy_n(bv + r * cb, cb, y.raw() + r * (ca + cb) + ca);
    }
    return tp.push(std::move(y), {a, b}, [=](Tape<T>& t, const Tensor<T>& gy) {
        if (t.needs_grad(a)) {
            T* g = t.grad(a).raw();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < ca; ++c) g[r * ca + c] += gy[r * (ca + cb) + c];
        }
        if (t.needs_grad(b)) {
            T* g = t.grad(b).raw();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cb; ++c) g[r * cb + c] += gy[r * (ca + cb) + ca + c];
        }
    });
}

/// Nearest-neighbour upsampling along length: (B, L, C) -> (B, L·factor, C).
template <class T>
Var upsample(Tape<T>& tp, Var x, std::size_t factor) {
    const Shape& xs = tp.shape(x);
    detail::require(xs.size() == 3 && factor >= 1, "upsample: expected (batch, length, channels), got " + to_string(xs));
    const std::size_t B = xs[0], L = xs[1], C = xs[2];
    Tensor<T> y(Shape{B, L * factor, C});
    const Tensor<T>& xv = tp.value(x);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t l = 0; l < L * factor; ++l)
            std::copy_n(xv.raw() + (b * L + l / factor) * C, C, y.raw() + (b * L * factor + l) * C);
    return tp.push(std::move(y), {x}, [=](Tape<T>& t, const Tensor<T>& gy) {
        Tensor<T>& g = t.grad(x);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t l = 0; l < L * factor; ++l)
                for (std::size_t c = 0; c < C; ++c) g.at(b, l / factor, c) += gy.at(b, l, c);
    });
}

template <class T>
Var reshape(Tape<T>& tp, Var x, Shape s) {
    Tensor<T> y = tp.value(x).reshaped(std::move(s));
    return tp.push(std::move(y), {x}, [=](Tape<T>& t, const Tensor<T>& gy) {
        Tensor<T>& g = t.grad(x);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[i];
    });
}

/// Row b of the result is null_row when use_null[b], else row b of data.
/// data (B, E); null_row (E).
template <class T>
Var select_rows(Tape<T>& tp, Var data, Var null_row, std::vector<bool> use_null) {
    const Shape& ds = tp.shape(data);
    detail::require(ds.size() == 2 && ds[0] == use_null.size() && tp.shape(null_row) == Shape{ds[1]},
                    "select_rows: data " + to_string(ds) + ", null row " + to_string(tp.shape(null_row)));
    const std::size_t B = ds[0], E = ds[1];
    Tensor<T> y = tp.value(data);
    const T* nv = tp.value(null_row).raw();
    for (std::size_t b = 0; b < B; ++b)
        if (use_null[b]) std::copy_n(nv, E, y.raw() + b * E);
    return tp.push(std::move(y), {data, null_row}, [=, use_null = std::move(use_null)](Tape<T>& t, const Tensor<T>& gy) {
        if (t.needs_grad(data)) {
            Tensor<T>& g = t.grad(data);
            for (std::size_t b = 0; b < B; ++b)
                if (!use_null[b])
                    for (std::size_t e = 0; e < E; ++e) g.at(b, e) += gy.at(b, e);
        }
        if (t.needs_grad(null_row)) {
            Tensor<T>& g = t.grad(null_row);
            for (std::size_t b = 0; b < B; ++b)
                if (use_null[b])
                    for (std::size_t e = 0; e < E; ++e) g[e] += gy.at(b, e);
        }
    });
}

template <class T>
Var sum(Tape<T>& tp, Var x) {
    T s = 0;
    for (T v : tp.value(x).data()) s += v;
    return tp.push(Tensor<T>(Shape{1}, s), {x}, [=](Tape<T>& t, const Tensor<T>& gy) {
        Tensor<T>& g = t.grad(x);
        for (auto& v : g.data()) v += gy[0];
    });
}

/// Mean squared error with optional per-batch-item weights:
/// (1/N)·Σ_b w_b Σ_j (a_bj − b_bj)², N = total element count.
template <class T>
Var mse(Tape<T>& tp, Var a, Var b, std::vector<T> weights = {}) {
    tp.value(a).check_same(tp.value(b), "mse");
    const Shape& as = tp.shape(a);
    const std::size_t n = tp.value(a).size();
    const std::size_t per = as.empty() ? n : n / as[0];
    if (!weights.empty())
        detail::require(!as.empty() && weights.size() == as[0],
                        "mse: " + std::to_string(weights.size()) + " weights for batch of " + to_string(as));
    const Tensor<T>& av = tp.value(a);
    const Tensor<T>& bv = tp.value(b);
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T d = av[i] - bv[i];
        acc += (weights.empty() ? T{1} : weights[i / per]) * d * d;
    }
    const T inv_n = T{1} / static_cast<T>(n);
    return tp.push(Tensor<T>(Shape{1}, acc * inv_n), {a, b},
                   [=, weights = std::move(weights)](Tape<T>& t, const Tensor<T>& gy) {
                       const Tensor<T>& x = t.value(a);
                       const Tensor<T>& y = t.value(b);
                       T* ga = t.needs_grad(a) ? t.grad(a).raw() : nullptr;
                       T* gb = t.needs_grad(b) ? t.grad(b).raw() : nullptr;
                       for (std::size_t i = 0; i < n; ++i) {
                           const T w = weights.empty() ? T{1} : weights[i / per];
                           const T g = gy[0] * T{2} * w * (x[i] - y[i]) * inv_n;
                           if (ga) ga[i] += g;
                           if (gb) gb[i] -= g;
                       }
                   });
}

}  // namespace darf::nn::ops
