#pragma once

#include <cstdint>
#include <cstddef>

#include "qdl/model.hpp"

namespace qdl {

struct SimConfig {
    double x0 = 0.0;
    std::size_t regime0 = 0;
    double dt = 1e-3;
    double horizon = 0.0;     ///< 0: choose 20 / delta automatically
    std::size_t n_paths = 100000;
    std::uint64_t seed = 1;
    bool antithetic = true;
};

struct PathResult {
    double payoff = 0.0; ///< discounted dividends minus impulse costs
    bool ruined = false;
    double ruin_time = 0.0;
    std::size_t n_impulses = 0;
};

/// One Euler path under a threshold policy. Regime sojourns are exact
/// exponential draws; the diffusion is stepped with increments clipped to
/// sojourn boundaries. `stream` selects the per-path random stream and
/// `negate` flips the sign of the Gaussian increments only (antithetic twin).
PathResult simulate_path(const ModelParams& params, const DividendPolicy& policy,
                         const SimConfig& cfg, std::uint64_t stream, bool negate);

struct SimEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n_samples = 0; ///< independent samples (pair averages if antithetic)
    double ruin_fraction = 0.0;
    double mean_impulses = 0.0;
};

/// Monte Carlo value of the policy from cfg.x0 in cfg.regime0. Deterministic
/// for a fixed (seed, n_paths, dt, horizon) regardless of thread count; the
/// thread pool size is capped by the QDL_THREADS environment variable.
SimEstimate estimate_value(const ModelParams& params, const DividendPolicy& policy,
                           const SimConfig& cfg);

} // namespace qdl
