#pragma once

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numeric>
#include <vector>

#include "darf/error.hpp"

namespace darf::metrics {

/// Ranks starting at 1; ties share their average rank.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0 || sbb == 0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

struct TrendTest {
    double rho = 0;
    double p_decreasing = 1;  // one-sided p-value for rho < 0
    double p_increasing = 1;  // one-sided p-value for rho > 0
};

/// Spearman rank correlation with the t approximation t = ρ·√((n−2)/(1−ρ²)), n−2 dof.
inline TrendTest spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 3) throw DataError("spearman: need at least 3 paired observations");
    TrendTest t;
    t.rho = pearson(average_ranks(x), average_ranks(y));
    const double dof = static_cast<double>(x.size() - 2);
    if (std::abs(t.rho) >= 1.0) {
        t.p_decreasing = t.rho < 0 ? 0.0 : 1.0;
        t.p_increasing = t.rho > 0 ? 0.0 : 1.0;
        return t;
    }
    const double stat = t.rho * std::sqrt(dof / (1.0 - t.rho * t.rho));
    const boost::math::students_t dist(dof);
    t.p_decreasing = boost::math::cdf(dist, stat);
    t.p_increasing = boost::math::cdf(boost::math::complement(dist, stat));
    return t;
}

inline double mean(const std::vector<double>& v) {
    if (v.empty()) throw DataError("mean of an empty sample");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw DataError("median of an empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// 95% half-width of the mean: t_{0.975, n−1}·s/√n; 0 for n < 2.
inline double ci95_half_width(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    const double n = static_cast<double>(v.size());
    const double sd = std::sqrt(ss / (n - 1));
    const boost::math::students_t dist(n - 1);
    return boost::math::quantile(dist, 0.975) * sd / std::sqrt(n);
}

}  // namespace darf::metrics
