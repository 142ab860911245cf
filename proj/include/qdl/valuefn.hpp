#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "qdl/model.hpp"

namespace qdl {

/// One piece of a piecewise exponential-polynomial value function:
///   v(x) = sum_j c_j exp(alpha_j (x - shift)) + a x + q   on [lo, hi).
struct ExpTerm {
    double coeff = 0.0;
    double exponent = 0.0;
};

struct ExpSegment {
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    double shift = 0.0;
    std::vector<ExpTerm> terms;
    double slope = 0.0;
    double intercept = 0.0;

    double value(double x) const;
    double deriv(double x) const;
    double deriv2(double x) const;
};

/// Per-regime ordered segments covering [0, infinity). The final segment of
/// each regime is pure affine with unit slope.
class ValueFunction {
public:
    ValueFunction() = default;
    explicit ValueFunction(std::vector<std::vector<ExpSegment>> per_regime);

    std::size_t n_regimes() const { return segments_.size(); }
    const std::vector<ExpSegment>& segments(std::size_t i) const { return segments_.at(i); }

    /// Value at x in regime i. At a breakpoint the right segment is used.
    double eval(double x, std::size_t i) const;
    double eval_deriv(double x, std::size_t i) const;
    double eval_deriv2(double x, std::size_t i) const;

    /// Interior breakpoints of regime i (segment boundaries above 0).
    std::vector<double> breakpoints(std::size_t i) const;

private:
    const ExpSegment& locate(double x, std::size_t i) const;
    std::vector<std::vector<ExpSegment>> segments_;
};

/// Best immediate lump payment: sup over u in (0, x] of v(x-u, i) + u - K.
/// `maximizer` is 0 when the supremum is the unattained u -> 0+ limit.
struct InterventionValue {
    double value = 0.0;
    double maximizer = 0.0;
    bool attained = true;
};

InterventionValue intervention_value(const ValueFunction& v, const ModelParams& params,
                                     double x, std::size_t i);

/// max over u in {0, L} of  sigma_i^2 v''/2 + (mu_i - u) v' - delta v
///                          - lambda_i v(x,i) + lambda_i v(x,other) + u.
/// The maximand is affine in u, so checking the endpoints is exact.
double generator_residual(const ValueFunction& v, const ModelParams& params,
                          double x, std::size_t i);

struct QviGrid {
    double x_max = 0.0;
    std::size_t n_points = 2001;
};

struct QviReport {
    QviGrid grid;
    double generator_max = 0.0;           ///< max over grid of max_u {L_i(u)v + u}
    double generator_abs_max_cont = 0.0;  ///< max |...| restricted to the continuation region
    double intervention_min = 0.0;        ///< min over grid of v - Mv
    double intervention_gap_max_tail = 0.0; ///< max |v - Mv| on the impulse regions
    double complementarity_max = 0.0;     ///< max |(v - Mv) * max_u {L_i(u)v + u}|
    double scale = 1.0;                   ///< max(1, sup |v|) used for the tolerance
    double tol = 1e-6;
    bool pass = false;
};

/// Evaluates the variational-inequality residuals of v on a uniform grid.
/// Generator checks skip one grid step around each breakpoint (v is only
/// piecewise C^2 there).
QviReport qvi_check(const ValueFunction& v, const ModelParams& params,
                    const DividendPolicy& policy, const QviGrid& grid, double tol = 1e-6);

struct BoundsReport {
    double upper_slack_min = 0.0;  ///< min over grid of (x + mu*/delta + L/delta) - v
    double growth_slack_min = 0.0; ///< min over pairs of v(x2)-v(x1) - (x2-x1-K)
    bool pass = false;
};

/// Checks the a-priori value bounds: v(x,i) <= x + mu*/delta + L/delta and
/// v(x2,i) - v(x1,i) >= x2 - x1 - K for grid pairs x1 < x2.
BoundsReport bounds_check(const ValueFunction& v, const ModelParams& params,
                          const QviGrid& grid, double tol = 1e-9);

/// Threshold policy read off a solved instance: rate 0 where v' > 1,
/// rate L on [b_i, B_i), impulse to b_i at x >= B_i.
DividendPolicy synthesize_policy(const ModelParams& params,
                                 const std::vector<double>& b,
                                 const std::vector<double>& B);

/// Roots of v'(., i) = 1 on [0, hi), located by scan + bisection.
std::vector<double> unit_slope_roots(const ValueFunction& v, std::size_t i, double hi,
                                     std::size_t scan_points = 4096);

} // namespace qdl
