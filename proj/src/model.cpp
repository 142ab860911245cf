#include "qdl/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace qdl {

double ModelParams::mu_min() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& r : regimes) m = std::min(m, r.mu);
    return m;
}

double ModelParams::mu_max() const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& r : regimes) m = std::max(m, r.mu);
    return m;
}

ModelParams validate(const ModelParams& params) {
    if (params.regimes.size() < 2)
        throw Error(ErrorCode::RegimeCountUnsupported,
                    "need at least 2 regimes, got " + std::to_string(params.regimes.size()));
    for (std::size_t i = 0; i < params.regimes.size(); ++i) {
        const auto& r = params.regimes[i];
        if (!(r.sigma > 0.0))
            throw Error(ErrorCode::NonPositiveParameter, "sigma of regime " + std::to_string(i + 1));
        if (!(r.lambda_out > 0.0))
            throw Error(ErrorCode::NonPositiveParameter, "lambda of regime " + std::to_string(i + 1));
        if (!(r.mu > 0.0))
            throw Error(ErrorCode::NonPositiveParameter, "mu of regime " + std::to_string(i + 1));
        if (!std::isfinite(r.mu) || !std::isfinite(r.sigma) || !std::isfinite(r.lambda_out))
            throw Error(ErrorCode::InvalidInput, "non-finite regime parameter");
    }
    if (!(params.delta > 0.0))
        throw Error(ErrorCode::NonPositiveParameter, "delta");
    if (!(params.fixed_cost > 0.0))
        throw Error(ErrorCode::NonPositiveParameter, "fixed_cost");
    if (params.rate_cap < 0.0)
        throw Error(ErrorCode::NonPositiveParameter, "rate_cap must be >= 0");
    if (!(params.rate_cap < params.mu_min()))
        throw Error(ErrorCode::AssumptionHViolated,
                    "rate cap L=" + std::to_string(params.rate_cap) +
                        " must be below min drift " + std::to_string(params.mu_min()));
    return params;
}

ModelParams swap_regimes(const ModelParams& params) {
    if (params.regimes.size() != 2)
        throw Error(ErrorCode::RegimeCountUnsupported, "swap_regimes needs exactly 2 regimes");
    ModelParams out = params;
    std::swap(out.regimes[0], out.regimes[1]);
    return out;
}

void validate_policy(const DividendPolicy& policy, const ModelParams& params) {
    if (policy.bands.size() != params.regimes.size())
        throw Error(ErrorCode::InvalidInput, "policy band count does not match regime count");
    const double L = params.rate_cap;
    for (const auto& b : policy.bands) {
        if (!(b.lower_threshold >= 0.0) || !(b.lower_threshold < b.upper_threshold))
            throw Error(ErrorCode::InvalidInput, "policy thresholds must satisfy 0 <= b < B");
        for (double r : {b.rate_low, b.rate_mid})
            if (r != 0.0 && r != L)
                throw Error(ErrorCode::InvalidInput, "policy rates must be 0 or L");
    }
}

} // namespace qdl
