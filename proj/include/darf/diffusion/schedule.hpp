#pragma once

#include <vector>

#include "darf/error.hpp"
#include "darf/ladder.hpp"

namespace darf::diffusion {

/// Descending noise ladder σ_max = levels[0] > … > levels[T−1] = σ_min.
/// Sampling takes one step per level and a final step to σ = 0.
struct NoiseSchedule {
    double sigma_min = 0.002;
    double sigma_max = 80.0;
    std::size_t T = 30;
    double rho = 7.0;
    std::vector<double> levels;

    std::size_t steps() const { return levels.size(); }
    /// Level after step i; 0 after the last one.
    double next(std::size_t i) const { return i + 1 < levels.size() ? levels[i + 1] : 0.0; }
};

inline NoiseSchedule build_schedule(double sigma_min, double sigma_max, std::size_t T, double rho = 7.0) {
    NoiseSchedule s;
    s.sigma_min = sigma_min;
    s.sigma_max = sigma_max;
    s.T = T;
    s.rho = rho;
    s.levels = karras_levels(sigma_min, sigma_max, T, rho);
    return s;
}

}  // namespace darf::diffusion
