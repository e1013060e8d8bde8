#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "darf/error.hpp"

namespace darf {

/// ρ-warped noise levels, descending from sigma_max to sigma_min.
/// levels[i] = (max^(1/ρ) + i/(n−1)·(min^(1/ρ) − max^(1/ρ)))^ρ; n = 1 gives {sigma_max}.
inline std::vector<double> karras_levels(double sigma_min, double sigma_max, std::size_t n, double rho) {
    if (!(sigma_min > 0 && sigma_min < sigma_max) || n < 1 || !(rho > 0))
        throw ConfigError("noise ladder: need 0 < sigma_min < sigma_max, n >= 1, rho > 0 (got " +
                          std::to_string(sigma_min) + ", " + std::to_string(sigma_max) + ", " + std::to_string(n) +
                          ", " + std::to_string(rho) + ")");
    std::vector<double> out(n);
    if (n == 1) {
        out[0] = sigma_max;
        return out;
    }
    const double a = std::pow(sigma_max, 1.0 / rho), b = std::pow(sigma_min, 1.0 / rho);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = std::pow(a + static_cast<double>(i) / static_cast<double>(n - 1) * (b - a), rho);
    out.front() = sigma_max;
    out.back() = sigma_min;
    return out;
}

}  // namespace darf
