#pragma once

#include <cmath>
#include <string>

#include "darf/nnkit/ops.hpp"
#include "darf/rng.hpp"

namespace darf::nn {

/// Kaiming-uniform initialization with fan-in scaling.
template <class T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
    Tensor<T> t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

template <class T>
struct Linear {
    Parameter<T> weight;
    Parameter<T> bias;

    Linear() = default;
    Linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng, bool zero_init = false)
        : weight(name + "/weight", zero_init ? Tensor<T>(Shape{in, out}) : kaiming_uniform<T>(Shape{in, out}, in, rng)),
          bias(name + "/bias", Tensor<T>(Shape{out})) {}

    Var operator()(Tape<T>& tp, Var x) { return ops::linear(tp, x, tp.parameter(weight), tp.parameter(bias)); }

    void collect(ParamList<T>& ps) {
        ps.push_back(&weight);
        ps.push_back(&bias);
    }
};

template <class T>
struct Conv1d {
    Parameter<T> weight;  // (kernel, in, out)
    Parameter<T> bias;
    std::size_t stride = 1;
    std::size_t pad = 0;

    Conv1d() = default;
    Conv1d(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, Rng& rng,
           std::size_t stride_ = 1, std::size_t pad_ = 0, double gain = 1.0)
        : weight(name + "/weight", kaiming_uniform<T>(Shape{kernel, in, out}, kernel * in, rng)),
          bias(name + "/bias", Tensor<T>(Shape{out})),
          stride(stride_),
          pad(pad_) {
        for (auto& v : weight.value.data()) v = static_cast<T>(v * gain);
    }

    /// Same-length convolution for odd kernels.
    static Conv1d same(const std::string& name, std::size_t in, std::size_t out, std::size_t kernel, Rng& rng,
                       double gain = 1.0) {
        return Conv1d(name, in, out, kernel, rng, 1, kernel / 2, gain);
    }

    Var operator()(Tape<T>& tp, Var x) {
        return ops::conv1d(tp, x, tp.parameter(weight), tp.parameter(bias), stride, pad);
    }

    void collect(ParamList<T>& ps) {
        ps.push_back(&weight);
        ps.push_back(&bias);
    }
};

/// The two projections (γ, β) of a conditioning embedding used by FiLM.
/// Zero-initialized, so a fresh projection is the identity modulation.
template <class T>
struct FilmProj {
    Linear<T> gamma;
    Linear<T> beta;

    FilmProj() = default;
    FilmProj(const std::string& name, std::size_t emb, std::size_t channels, Rng& rng)
        : gamma(name + "/gamma", emb, channels, rng, true), beta(name + "/beta", emb, channels, rng, true) {}

    void collect(ParamList<T>& ps) {
        gamma.collect(ps);
        beta.collect(ps);
    }
};

/// h·(1+γ(e)) + β(e) with h (B, L, C) and e (B, E).
template <class T>
Var film_modulate(Tape<T>& tp, Var h, Var embedding, FilmProj<T>& proj) {
    const Shape& hs = tp.shape(h);
    const Shape& es = tp.shape(embedding);
    if (hs.size() != 3 || es.size() != 2 || hs[0] != es[0])
        throw DimensionError("film_modulate: batch mismatch between features " + to_string(hs) + " and embedding " +
                             to_string(es));
    Var g = proj.gamma(tp, embedding);
    Var b = proj.beta(tp, embedding);
    return ops::film(tp, h, g, b);
}

/// Pre-norm residual block with FiLM after the first convolution:
/// conv(silu(gn(film(conv(silu(gn(x))), e)))) + skip(x). skip is a 1x1
/// convolution when channel counts differ.
template <class T>
struct ResBlock {
    Conv1d<T> conv1, conv2, skip;
    FilmProj<T> film;
    std::size_t groups = 8;
    bool has_skip = false;

    ResBlock() = default;
    ResBlock(const std::string& name, std::size_t in, std::size_t out, std::size_t emb, std::size_t kernel, Rng& rng,
             std::size_t groups_ = 8)
        : conv1(Conv1d<T>::same(name + "/conv1", in, out, kernel, rng)),
          conv2(Conv1d<T>::same(name + "/conv2", out, out, kernel, rng)),
          film(name + "/film", emb, out, rng),
          groups(groups_),
          has_skip(in != out) {
        if (has_skip) skip = Conv1d<T>(name + "/skip", in, out, 1, rng);
    }

    Var operator()(Tape<T>& tp, Var x, Var e) {
        Var h = conv1(tp, ops::silu(tp, ops::group_norm(tp, x, groups)));
        h = film_modulate(tp, h, e, film);
        h = conv2(tp, ops::silu(tp, ops::group_norm(tp, h, groups)));
        return ops::add(tp, h, has_skip ? skip(tp, x) : x);
    }

    void collect(ParamList<T>& ps) {
        conv1.collect(ps);
        conv2.collect(ps);
        film.collect(ps);
        if (has_skip) skip.collect(ps);
    }
};

/// Sinusoidal features of one scalar per batch item: (B) -> (B, dim), dim even.
/// Frequencies are geometric from 1 to 1/10000.
template <class T>
Tensor<T> sinusoidal_embedding(const std::vector<double>& values, std::size_t dim) {
    if (dim % 2 != 0) throw DimensionError("sinusoidal_embedding: dim must be even, got " + std::to_string(dim));
    Tensor<T> out(Shape{values.size(), dim});
    const std::size_t half = dim / 2;
    for (std::size_t b = 0; b < values.size(); ++b)
        for (std::size_t i = 0; i < half; ++i) {
            const double f = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
            out.at(b, i) = static_cast<T>(std::cos(values[b] * f * 1000.0));
            out.at(b, half + i) = static_cast<T>(std::sin(values[b] * f * 1000.0));
        }
    return out;
}

}  // namespace darf::nn
