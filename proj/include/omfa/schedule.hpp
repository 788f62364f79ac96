#pragma once

#include <cmath>
#include <vector>

#include "omfa/errors.hpp"

namespace omfa {

// Diffusion timestep table: per-step beta_t and the cumulative products
// alpha_bar_t = prod_{s<=t} (1 - beta_s). Computed in double regardless of
// the latent scalar type so sqrt(alpha_bar) stays accurate near t = T-1.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> betas;
    std::vector<double> alpha_bars;

    // alpha_bar at index t, with t == -1 denoting the clean endpoint (== 1).
    double alpha_bar(int t) const {
        if (t == -1) return 1.0;
        if (t < 0 || t >= T) throw ParamError("timestep out of range: " + std::to_string(t));
        return alpha_bars[static_cast<std::size_t>(t)];
    }
};

// Linear beta schedule from beta_start to beta_end over T steps.
inline NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw ParamError("schedule length must be >= 1");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
        throw ParamError("beta range must satisfy 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.T = T;
    s.betas.resize(static_cast<std::size_t>(T));
    s.alpha_bars.resize(static_cast<std::size_t>(T));
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        double beta = (T == 1) ? beta_start
                               : beta_start + static_cast<double>(t) * (beta_end - beta_start) /
                                                  static_cast<double>(T - 1);
        prod *= 1.0 - beta;
        s.betas[static_cast<std::size_t>(t)] = beta;
        s.alpha_bars[static_cast<std::size_t>(t)] = prod;
    }
    return s;
}

inline NoiseSchedule default_schedule() { return make_schedule(1000, 1e-4, 0.02); }

}  // namespace omfa
