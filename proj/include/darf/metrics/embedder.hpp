#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "darf/codec/codec.hpp"
#include "darf/error.hpp"
#include "darf/nnkit/tensor.hpp"
#include "darf/rng.hpp"
#include "darf/synthdata/dataset.hpp"

namespace darf::metrics {

inline constexpr std::size_t kEmbedDim = 64;

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline Vec normalized(Vec v) {
    const double n = std::sqrt(dot(v, v));
    if (!(n > 0)) throw NumericalError("cannot normalize a zero-norm embedding");
    for (auto& x : v) x /= n;
    return v;
}

/// Frozen stand-in for a joint audio/description embedding space.
/// Audio head: normalize(W2 · [mean_f tanh(W1 u_f + b1) ; α·dct_{1..4}(log rms(u_f))]),
/// u = z / rms(z). The first block summarizes timbre; the second the loudness
/// trajectory across frames. Both are invariant to overall latent scale, and the
/// cosine basis makes the trajectory block independent of the frame count.
/// Description head: normalized mean of audio-head embeddings of encoded
/// single-role prototype signals, one vector per role.
class Embedder {
public:
    static constexpr std::size_t kHidden = 128;
    static constexpr std::size_t kTrajectory = 4;
    static constexpr double kTrajectoryWeight = 16.0;
    static constexpr std::size_t kFeatures = kHidden + kTrajectory;

    explicit Embedder(std::uint64_t seed = 0x5eed)
        : seed_(seed), w1_(kHidden * 64), b1_(kHidden), w2_(kEmbedDim * kFeatures) {
        Rng rng(seed, {0xe3b});
        const double s1 = 2.0 / std::sqrt(64.0), s2 = 1.0 / std::sqrt(static_cast<double>(kFeatures));
        for (auto& w : w1_) w = s1 * rng.normal();
        for (auto& b : b1_) b = 0.3 * rng.normal();
        for (auto& w : w2_) w = s2 * rng.normal();
    }

    std::uint64_t seed() const { return seed_; }

    /// z (frames, 64) row-major.
    Vec embed_latents(const float* z, std::size_t frames) const {
        if (frames == 0) throw DimensionError("embed: empty latent sequence");
        double ss = 0;
        for (std::size_t i = 0; i < frames * 64; ++i) ss += double(z[i]) * z[i];
        const double rms = std::sqrt(ss / static_cast<double>(frames * 64));
        const double inv = rms > 1e-12 ? 1.0 / rms : 0.0;
        const double F = static_cast<double>(frames);
        std::array<double, kFeatures> pooled{};
        std::vector<double> level(frames);
        for (std::size_t f = 0; f < frames; ++f) {
            double e = 0;
            for (std::size_t c = 0; c < 64; ++c) e += double(z[f * 64 + c]) * z[f * 64 + c];
            level[f] = 0.5 * std::log(e * inv * inv / 64.0 + 1e-6);
            for (std::size_t h = 0; h < kHidden; ++h) {
                double a = 0;
                for (std::size_t c = 0; c < 64; ++c) a += w1_[h * 64 + c] * z[f * 64 + c];
                pooled[h] += std::tanh(b1_[h] + inv * a) / F;
            }
        }
        const double mean_level = std::accumulate(level.begin(), level.end(), 0.0) / F;
        for (std::size_t k = 1; k <= kTrajectory; ++k) {
            double d = 0;
            for (std::size_t f = 0; f < frames; ++f)
                d += (level[f] - mean_level) * std::cos(std::numbers::pi * double(k) * (double(f) + 0.5) / F);
            pooled[kHidden + k - 1] = kTrajectoryWeight * std::sqrt(2.0 / F) * d;
        }
        Vec out(kEmbedDim, 0.0);
        for (std::size_t o = 0; o < kEmbedDim; ++o)
            for (std::size_t j = 0; j < kFeatures; ++j) out[o] += w2_[o * kFeatures + j] * pooled[j];
        return normalized(std::move(out));
    }

    Vec embed(const codec::LatentSequence& z) const { return embed_latents(z.values.raw(), z.frames()); }

    /// Rows of a (B, F, 64) batch.
    std::vector<Vec> embed_batch(const nn::Tensor<float>& z) const {
        if (z.rank() != 3 || z.dim(2) != 64) throw DimensionError("embed_batch: expected (batch, frames, 64), got " + nn::to_string(z.shape()));
        std::vector<Vec> out;
        const std::size_t per = z.dim(1) * 64;
        for (std::size_t b = 0; b < z.dim(0); ++b) out.push_back(embed_latents(z.raw() + b * per, z.dim(1)));
        return out;
    }

    bool has_descriptions() const { return !descriptions_.empty(); }

    const Vec& describe(synth::Role r) const {
        if (!has_descriptions()) throw MissingArtifactError("embedder description head has not been built");
        return descriptions_.at(static_cast<std::size_t>(r));
    }

    const std::vector<Vec>& descriptions() const { return descriptions_; }
    void set_descriptions(std::vector<Vec> d) {
        if (d.size() != synth::kRoleCount) throw DimensionError("embedder: need one description per role");
        for (auto& v : d) v = normalized(std::move(v));
        descriptions_ = std::move(d);
    }

    /// Builds the description head from `per_role` encoded single-role windows
    /// drawn from a prototype dataset that shares no seed with training data.
    template <class T>
    void build_descriptions(codec::CodecModel<T>& codec, std::size_t per_role = 16) {
        synth::DatasetSpec proto;
        proto.seed = seed_ ^ 0x9e3779b97f4a7c15ULL;
        proto.n_tracksets = 1u << 20;
        proto.track_len = proto.window_len;
        std::vector<Vec> sums(synth::kRoleCount, Vec(kEmbedDim, 0.0));
        std::vector<std::size_t> counts(synth::kRoleCount, 0);
        for (std::uint64_t i = 0; i < 4096; ++i) {
            bool done = true;
            for (std::size_t r = 0; r < synth::kRoleCount; ++r) done = done && counts[r] >= per_role;
            if (done) break;
            const auto ts = synth::generate_trackset(proto, i);
            for (const auto& tr : ts.tracks) {
                const auto r = static_cast<std::size_t>(tr.role);
                if (counts[r] >= per_role) continue;
                const Vec e = embed(codec::encode(tr.signal, codec));
                for (std::size_t k = 0; k < kEmbedDim; ++k) sums[r][k] += e[k];
                ++counts[r];
            }
        }
        set_descriptions(std::move(sums));
    }

private:
    std::uint64_t seed_;
    std::vector<double> w1_, b1_, w2_;
    std::vector<Vec> descriptions_;
};

}  // namespace darf::metrics
