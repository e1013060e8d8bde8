#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "darf/error.hpp"
#include "darf/metrics/embedder.hpp"
#include "darf/rng.hpp"

namespace darf::metrics {

enum class Provenance { real, generated, reference };

/// n × d embeddings, one row per item.
struct EmbeddingSet {
    std::vector<Vec> rows;
    Provenance provenance = Provenance::generated;

    std::size_t size() const { return rows.size(); }
    std::size_t dim() const { return rows.empty() ? 0 : rows.front().size(); }
};

namespace detail {

inline void require_size(const EmbeddingSet& s, std::size_t n, const char* what) {
    if (s.size() < n)
        throw DataError(std::string(what) + ": need at least " + std::to_string(n) + " embeddings, got " +
                        std::to_string(s.size()));
}

// Order-independent sum: sort, then accumulate.
inline double sorted_sum(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    double s = 0;
    for (double x : v) s += x;
    return s;
}

inline double sq_dist(const Vec& a, const Vec& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace detail

/// Cubic polynomial kernel (xᵀy/d + 1)³.
inline double poly_kernel(const Vec& x, const Vec& y) {
    const double v = dot(x, y) / static_cast<double>(x.size()) + 1.0;
    return v * v * v;
}

/// Gaussian kernel exp(−‖x−y‖²/(2·bw²)).
inline double gaussian_kernel(const Vec& x, const Vec& y, double bandwidth) {
    return std::exp(-detail::sq_dist(x, y) / (2 * bandwidth * bandwidth));
}

enum class Kernel { polynomial, gaussian };

namespace detail {

inline double kernel_value(Kernel kernel, double bandwidth, const Vec& x, const Vec& y) {
    return kernel == Kernel::polynomial ? poly_kernel(x, y) : gaussian_kernel(x, y, bandwidth);
}

// Mean of k(x_i, x_j) over ordered pairs i != j.
inline double mmd_within(const EmbeddingSet& s, Kernel kernel, double bandwidth) {
    std::vector<double> v;
    v.reserve(s.size() * (s.size() - 1) / 2);
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = i + 1; j < s.size(); ++j) v.push_back(kernel_value(kernel, bandwidth, s.rows[i], s.rows[j]));
    const double m = static_cast<double>(s.size());
    return 2.0 * sorted_sum(v) / (m * (m - 1));
}

inline double mmd_cross(const EmbeddingSet& a, const EmbeddingSet& b, Kernel kernel, double bandwidth) {
    std::vector<double> v;
    v.reserve(a.size() * b.size());
    for (const auto& x : a.rows)
        for (const auto& y : b.rows) v.push_back(kernel_value(kernel, bandwidth, x, y));
    return sorted_sum(v) / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

inline void check_mmd_inputs(const EmbeddingSet& a, const EmbeddingSet& b) {
    require_size(a, 2, "mmd2");
    require_size(b, 2, "mmd2");
    if (a.dim() != b.dim()) throw DimensionError("mmd2: embedding dimensions differ");
}

}  // namespace detail

/// Unbiased MMD². Symmetric in (a, b) bitwise: every block is summed in sorted order.
inline double mmd2(const EmbeddingSet& a, const EmbeddingSet& b, Kernel kernel = Kernel::polynomial,
                   double bandwidth = 1.0) {
    detail::check_mmd_inputs(a, b);
    return (detail::mmd_within(a, kernel, bandwidth) + detail::mmd_within(b, kernel, bandwidth)) -
           2.0 * detail::mmd_cross(a, b, kernel, bandwidth);
}

/// MMD² against a fixed reference set whose within-set term is computed once.
/// Gives the same value as mmd2(candidates, reference).
class MmdReference {
public:
    explicit MmdReference(const EmbeddingSet& ref, Kernel kernel = Kernel::polynomial, double bandwidth = 1.0)
        : ref_(ref), kernel_(kernel), bw_(bandwidth) {
        detail::require_size(ref_, 2, "mmd2");
        within_ = detail::mmd_within(ref_, kernel_, bw_);
    }
    double operator()(const EmbeddingSet& gen) const {
        detail::check_mmd_inputs(gen, ref_);
        return (detail::mmd_within(gen, kernel_, bw_) + within_) - 2.0 * detail::mmd_cross(gen, ref_, kernel_, bw_);
    }

private:
    const EmbeddingSet& ref_;
    Kernel kernel_;
    double bw_;
    double within_ = 0;
};

struct GaussianStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// Sample mean and unbiased covariance plus eps·I.
inline GaussianStats fit_gaussian(const EmbeddingSet& s, double eps = 1e-6) {
    detail::require_size(s, 2, "frechet");
    const std::size_t n = s.size(), d = s.dim();
    Eigen::MatrixXd X(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) X(i, j) = s.rows[i][j];
    GaussianStats g;
    g.mean = X.colwise().mean();
    const Eigen::MatrixXd C = X.rowwise() - g.mean.transpose();
    g.cov = (C.transpose() * C) / static_cast<double>(n - 1);
    g.cov += eps * Eigen::MatrixXd::Identity(d, d);
    return g;
}

/// ‖μa−μb‖² + tr(Σa + Σb − 2(Σa^½ Σb Σa^½)^½).
inline double frechet_from_stats(const GaussianStats& a, const GaussianStats& b) {
    if (a.mean.size() != b.mean.size()) throw DimensionError("frechet: embedding dimensions differ");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(a.cov);
    const double tol = 1e-10 * std::max(1.0, ea.eigenvalues().cwiseAbs().maxCoeff());
    if (ea.eigenvalues().minCoeff() < -tol)
        throw NumericalError("frechet: covariance not PSD after regularization (min eigenvalue " +
                             std::to_string(ea.eigenvalues().minCoeff()) + ")");
    const Eigen::VectorXd sa = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd root_a = ea.eigenvectors() * sa.asDiagonal() * ea.eigenvectors().transpose();
    const Eigen::MatrixXd M = root_a * b.cov * root_a;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(0.5 * (M + M.transpose()), Eigen::EigenvaluesOnly);
    const double tol_m = 1e-10 * std::max(1.0, em.eigenvalues().cwiseAbs().maxCoeff());
    if (em.eigenvalues().minCoeff() < -tol_m)
        throw NumericalError("frechet: Σa^½ Σb Σa^½ has eigenvalue " + std::to_string(em.eigenvalues().minCoeff()));
    const double tr_root = em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double mean_term = (a.mean - b.mean).squaredNorm();
    return mean_term + a.cov.trace() + b.cov.trace() - 2.0 * tr_root;
}

inline double frechet(const EmbeddingSet& a, const EmbeddingSet& b, double eps = 1e-6) {
    return frechet_from_stats(fit_gaussian(a, eps), fit_gaussian(b, eps));
}

struct DensityCoverage {
    double density = 0;
    double coverage = 0;
};

/// Distance from each real point to its k-th nearest other real point.
inline std::vector<double> knn_radii(const EmbeddingSet& real, std::size_t k) {
    if (k == 0 || real.size() <= k)
        throw DataError("density_coverage: need more than k = " + std::to_string(k) + " real points");
    const std::size_t n = real.size();
    std::vector<double> radius(n), d(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t w = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) d[w++] = std::sqrt(detail::sq_dist(real.rows[i], real.rows[j]));
        std::nth_element(d.begin(), d.begin() + static_cast<long>(k - 1), d.end());
        radius[i] = d[k - 1];
    }
    if (std::all_of(radius.begin(), radius.end(), [](double r) { return r == 0.0; }))
        throw DataError("density_coverage: real set consists of duplicates only (all k-NN radii are zero)");
    return radius;
}

/// density = (1/(k·|gen|))·Σ_g #{r : ‖g−r‖ < radius_k(r)};
/// coverage = fraction of real points whose ball holds at least one generated point.
inline DensityCoverage density_coverage_with_radii(const EmbeddingSet& real, const std::vector<double>& radius,
                                                   const EmbeddingSet& gen, std::size_t k) {
    detail::require_size(gen, 1, "density_coverage");
    const std::size_t n = real.size(), m = gen.size();
    std::size_t inside = 0, covered = 0;
    std::vector<bool> hit(n, false);
    for (std::size_t g = 0; g < m; ++g)
        for (std::size_t i = 0; i < n; ++i)
            if (std::sqrt(detail::sq_dist(gen.rows[g], real.rows[i])) < radius[i]) {
                ++inside;
                hit[i] = true;
            }
    for (bool h : hit) covered += h;
    return {static_cast<double>(inside) / (static_cast<double>(k) * static_cast<double>(m)),
            static_cast<double>(covered) / static_cast<double>(n)};
}

inline DensityCoverage density_coverage(const EmbeddingSet& real, const EmbeddingSet& gen, std::size_t k = 5) {
    return density_coverage_with_radii(real, knn_radii(real, k), gen, k);
}

/// Mean cosine similarity of paired rows.
inline double clap_score(const EmbeddingSet& desc, const EmbeddingSet& audio) {
    if (desc.size() != audio.size()) throw DataError("clap_score: " + std::to_string(desc.size()) + " descriptions vs " + std::to_string(audio.size()) + " audio embeddings");
    detail::require_size(desc, 1, "clap_score");
    double s = 0;
    for (std::size_t i = 0; i < desc.size(); ++i)
        s += dot(desc.rows[i], audio.rows[i]) /
             std::sqrt(dot(desc.rows[i], desc.rows[i]) * dot(audio.rows[i], audio.rows[i]));
    return s / static_cast<double>(desc.size());
}

/// Rows [a_i ‖ b_i].
inline EmbeddingSet concat_pairs(const EmbeddingSet& a, const EmbeddingSet& b) {
    if (a.size() != b.size()) throw DataError("pair embeddings: counts differ");
    EmbeddingSet out;
    out.provenance = b.provenance;
    for (std::size_t i = 0; i < a.size(); ++i) {
        Vec r = a.rows[i];
        r.insert(r.end(), b.rows[i].begin(), b.rows[i].end());
        out.rows.push_back(std::move(r));
    }
    return out;
}

/// Random cyclic permutation (Sattolo): no element stays in place.
inline std::vector<std::size_t> derangement(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), 0);
    Rng rng(seed, {0xde7});
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i - 1)]);
    return p;
}

/// clamp((d_mismatch − d_match)/d_mismatch, 0, 1); 0 when d_mismatch ≤ 0.
inline double adherence_score(double d_match, double d_mismatch) {
    if (!(d_mismatch > 0)) return 0.0;
    return std::clamp((d_mismatch - d_match) / d_mismatch, 0.0, 1.0);
}

struct AdherenceParts {
    double d_match = 0;
    double d_mismatch = 0;
    double score = 0;
};

/// Prompt-adherence stand-in: d_match is the Fréchet distance of
/// [context ‖ candidate] to real [context ‖ accompaniment] pairs, d_mismatch
/// the same with candidates deranged; score = clamp((d_mismatch − d_match)/d_mismatch, 0, 1).
inline AdherenceParts adherence_parts(const EmbeddingSet& contexts, const EmbeddingSet& candidates,
                                      const GaussianStats& real_pairs, std::uint64_t seed = 0) {
    detail::require_size(contexts, 2, "adherence");
    if (contexts.size() != candidates.size()) throw DataError("adherence: contexts and candidates differ in count");
    AdherenceParts p;
    p.d_match = frechet_from_stats(fit_gaussian(concat_pairs(contexts, candidates)), real_pairs);
    EmbeddingSet shuffled = candidates;
    const auto perm = derangement(candidates.size(), seed);
    for (std::size_t i = 0; i < perm.size(); ++i) shuffled.rows[i] = candidates.rows[perm[i]];
    p.d_mismatch = frechet_from_stats(fit_gaussian(concat_pairs(contexts, shuffled)), real_pairs);
    p.score = adherence_score(p.d_match, p.d_mismatch);
    return p;
}

inline AdherenceParts adherence_parts(const EmbeddingSet& contexts, const EmbeddingSet& candidates,
                                      const EmbeddingSet& real_contexts, const EmbeddingSet& real_accomp,
                                      std::uint64_t seed = 0) {
    return adherence_parts(contexts, candidates, fit_gaussian(concat_pairs(real_contexts, real_accomp)), seed);
}

inline double adherence(const EmbeddingSet& contexts, const EmbeddingSet& candidates, const EmbeddingSet& real_contexts,
                        const EmbeddingSet& real_accomp, std::uint64_t seed = 0) {
    return adherence_parts(contexts, candidates, real_contexts, real_accomp, seed).score;
}

}  // namespace darf::metrics
