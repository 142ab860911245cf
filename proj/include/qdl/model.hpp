#pragma once

#include <cstddef>
#include <vector>

#include "qdl/errors.hpp"

namespace qdl {

/// One economic regime of the surplus diffusion.
struct RegimeParams {
    double mu = 0.0;         ///< drift (currency/time)
    double sigma = 0.0;      ///< volatility (currency/sqrt(time))
    double lambda_out = 0.0; ///< intensity of leaving this regime (1/time)

    friend bool operator==(const RegimeParams&, const RegimeParams&) = default;
};

/// Full problem parameter set. Immutable after validation.
///
/// The impulse utility is fixed to g(x) = x - K; only the fixed cost K is
/// stored. Two regimes are required by the analytic solver; the simulator
/// and the grid oracle accept any N >= 2.
struct ModelParams {
    std::vector<RegimeParams> regimes;
    double delta = 0.0;      ///< discount rate (1/time)
    double rate_cap = 0.0;   ///< L, maximum continuous dividend rate
    double fixed_cost = 0.0; ///< K, fixed transaction cost per impulse

    std::size_t n_regimes() const { return regimes.size(); }
    double mu_min() const;
    double mu_max() const;

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Checks every model invariant, returning the params unchanged on success.
///
/// Throws Error with code NonPositiveParameter, AssumptionHViolated, or
/// RegimeCountUnsupported (fewer than 2 regimes).
ModelParams validate(const ModelParams& params);

/// Exchanges the two regime labels. Requires exactly 2 regimes.
ModelParams swap_regimes(const ModelParams& params);

/// Threshold policy of the kind produced by the analytic solver: pay at
/// rate_low on [0,b), rate_mid on [b,B), and at x >= B pay the lump x - b.
struct PolicyBand {
    double lower_threshold = 0.0; ///< b, impulse target / rate switch level
    double upper_threshold = 0.0; ///< B, impulse trigger
    double rate_low = 0.0;        ///< continuous rate on [0,b)
    double rate_mid = 0.0;        ///< continuous rate on [b,B)
};

struct DividendPolicy {
    std::vector<PolicyBand> bands; // one per regime

    /// Continuous rate at surplus x in regime i (before any impulse).
    double rate(double x, std::size_t i) const {
        const PolicyBand& b = bands.at(i);
        if (x < b.lower_threshold) return b.rate_low;
        if (x < b.upper_threshold) return b.rate_mid;
        return b.rate_mid; // impulse fires first; rate irrelevant at x >= B
    }
};

/// Checks 0 <= b < B per regime and rates in {0, L}.
void validate_policy(const DividendPolicy& policy, const ModelParams& params);

} // namespace qdl
