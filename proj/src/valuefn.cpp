#include "qdl/valuefn.hpp"

#include <algorithm>
#include <cmath>

namespace qdl {

double ExpSegment::value(double x) const {
    double s = slope * x + intercept;
    for (const auto& t : terms) s += t.coeff * std::exp(t.exponent * (x - shift));
    return s;
}

double ExpSegment::deriv(double x) const {
    double s = slope;
    for (const auto& t : terms) s += t.coeff * t.exponent * std::exp(t.exponent * (x - shift));
    return s;
}

double ExpSegment::deriv2(double x) const {
    double s = 0.0;
    for (const auto& t : terms)
        s += t.coeff * t.exponent * t.exponent * std::exp(t.exponent * (x - shift));
    return s;
}

ValueFunction::ValueFunction(std::vector<std::vector<ExpSegment>> per_regime)
    : segments_(std::move(per_regime)) {
    for (auto& regime : segments_) {
        if (regime.empty())
            throw Error(ErrorCode::InvalidInput, "value function regime with no segments");
        for (std::size_t k = 0; k + 1 < regime.size(); ++k)
            if (!(regime[k].hi > regime[k].lo) || regime[k].hi != regime[k + 1].lo)
                throw Error(ErrorCode::InvalidInput, "value function segments must tile [0,inf)");
        if (std::isfinite(regime.back().hi))
            throw Error(ErrorCode::InvalidInput, "final segment must be unbounded");
    }
}

const ExpSegment& ValueFunction::locate(double x, std::size_t i) const {
    const auto& segs = segments_.at(i);
    // Right segment at a breakpoint: first segment with hi > x.
    for (const auto& s : segs)
        if (x < s.hi) return s;
    return segs.back();
}

double ValueFunction::eval(double x, std::size_t i) const {
    if (x < 0.0) throw Error(ErrorCode::NegativeSurplus, "eval at negative surplus");
    return locate(x, i).value(x);
}

double ValueFunction::eval_deriv(double x, std::size_t i) const {
    if (x < 0.0) throw Error(ErrorCode::NegativeSurplus, "eval_deriv at negative surplus");
    return locate(x, i).deriv(x);
}

double ValueFunction::eval_deriv2(double x, std::size_t i) const {
    if (x < 0.0) throw Error(ErrorCode::NegativeSurplus, "eval_deriv2 at negative surplus");
    return locate(x, i).deriv2(x);
}

std::vector<double> ValueFunction::breakpoints(std::size_t i) const {
    std::vector<double> out;
    const auto& segs = segments_.at(i);
    for (std::size_t k = 1; k < segs.size(); ++k) out.push_back(segs[k].lo);
    return out;
}

std::vector<double> unit_slope_roots(const ValueFunction& v, std::size_t i, double hi,
                                     std::size_t scan_points) {
    std::vector<double> roots;
    const auto& segs = v.segments(i);
    const double flat_tol = 1e-9;
    for (const auto& seg : segs) {
        const double lo = std::max(seg.lo, 0.0);
        const double up = std::min(seg.hi, hi);
        if (!(up > lo)) continue;
        if (seg.terms.empty()) {
            if (std::abs(seg.slope - 1.0) < flat_tol) roots.push_back(lo); // slope-1 plateau
            continue;
        }
        const std::size_t n = std::max<std::size_t>(16, scan_points / std::max<std::size_t>(1, segs.size()));
        const double h = (up - lo) / static_cast<double>(n);
        double xa = lo;
        double ga = seg.deriv(xa) - 1.0;
        for (std::size_t k = 1; k <= n; ++k) {
            const double xb = (k == n) ? up : lo + h * static_cast<double>(k);
            const double gb = seg.deriv(xb) - 1.0;
            if (std::abs(ga) < flat_tol) {
                roots.push_back(xa);
            } else if (ga * gb < 0.0) {
                double a = xa, b = xb, fa = ga;
                for (int it = 0; it < 80; ++it) {
                    const double m = 0.5 * (a + b);
                    const double fm = seg.deriv(m) - 1.0;
                    if (fa * fm <= 0.0) b = m; else { a = m; fa = fm; }
                }
                roots.push_back(0.5 * (a + b));
            }
            xa = xb;
            ga = gb;
        }
        if (std::abs(ga) < flat_tol) roots.push_back(xa);
    }
    std::sort(roots.begin(), roots.end());
    roots.erase(std::unique(roots.begin(), roots.end(),
                            [](double a, double b) { return std::abs(a - b) < 1e-10; }),
                roots.end());
    return roots;
}

InterventionValue intervention_value(const ValueFunction& v, const ModelParams& params,
                                     double x, std::size_t i) {
    if (x < 0.0) throw Error(ErrorCode::NegativeSurplus, "intervention_value at negative surplus");
    const double K = params.fixed_cost;

    InterventionValue best;
    best.value = v.eval(x, i) - K; // unattained u -> 0+ limit
    best.maximizer = 0.0;
    best.attained = false;

    auto consider = [&](double u) {
        if (!(u > 0.0) || u > x) return;
        const double val = v.eval(x - u, i) + u - K;
        if (val > best.value + 1e-14 * std::max(1.0, std::abs(best.value))) {
            best.value = val;
            best.maximizer = u;
            best.attained = true;
        }
    };

    consider(x); // pay everything, jump to 0
    for (double r : unit_slope_roots(v, i, x))
        consider(x - r); // interior stationary points: v'(x-u) = 1
    return best;
}

double generator_residual(const ValueFunction& v, const ModelParams& params,
                          double x, std::size_t i) {
    const auto& r = params.regimes.at(i);
    const std::size_t other = 1 - i;
    const double vi = v.eval(x, i);
    const double vo = v.eval(x, other);
    const double d1 = v.eval_deriv(x, i);
    const double d2 = v.eval_deriv2(x, i);
    const double base = 0.5 * r.sigma * r.sigma * d2 + r.mu * d1 - params.delta * vi -
                        r.lambda_out * vi + r.lambda_out * vo;
    const double with_l = base + params.rate_cap * (1.0 - d1);
    return std::max(base, with_l);
}

QviReport qvi_check(const ValueFunction& v, const ModelParams& params,
                    const DividendPolicy& policy, const QviGrid& grid, double tol) {
    QviReport rep;
    rep.grid = grid;
    rep.tol = tol;
    rep.generator_max = -std::numeric_limits<double>::infinity();
    rep.generator_abs_max_cont = 0.0;
    rep.intervention_min = std::numeric_limits<double>::infinity();
    rep.intervention_gap_max_tail = 0.0;
    rep.complementarity_max = 0.0;

    const std::size_t n = std::max<std::size_t>(grid.n_points, 2);
    const double h = grid.x_max / static_cast<double>(n - 1);

    double sup_abs = 1.0;
    for (std::size_t i = 0; i < v.n_regimes(); ++i)
        for (std::size_t k = 0; k < n; ++k)
            sup_abs = std::max(sup_abs, std::abs(v.eval(h * static_cast<double>(k), i)));
    rep.scale = sup_abs;

    for (std::size_t i = 0; i < v.n_regimes(); ++i) {
        const auto bps = v.breakpoints(i);
        const double B = policy.bands.at(i).upper_threshold;
        // Stationary points of the impulse maximand are shared by every x,
        // so find them once per regime instead of once per grid point.
        const auto roots = unit_slope_roots(v, i, grid.x_max);
        for (std::size_t k = 0; k < n; ++k) {
            const double x = h * static_cast<double>(k);
            const double vi = v.eval(x, i);
            double m_best = vi - params.fixed_cost;
            auto consider = [&](double u) {
                if (!(u > 0.0) || u > x) return;
                m_best = std::max(m_best, v.eval(x - u, i) + u - params.fixed_cost);
            };
            consider(x);
            for (double r : roots) consider(x - r);
            const double gap = vi - m_best;
            rep.intervention_min = std::min(rep.intervention_min, gap);
            if (x >= B)
                rep.intervention_gap_max_tail = std::max(rep.intervention_gap_max_tail, std::abs(gap));

            bool near_break = false;
            for (double bp : bps)
                if (std::abs(x - bp) < h) { near_break = true; break; }
            if (near_break) continue;

            const double res = generator_residual(v, params, x, i);
            rep.generator_max = std::max(rep.generator_max, res);
            if (x < B)
                rep.generator_abs_max_cont = std::max(rep.generator_abs_max_cont, std::abs(res));
            rep.complementarity_max = std::max(rep.complementarity_max, std::abs(gap * res));
        }
    }

    const double t = tol * rep.scale;
    rep.pass = rep.generator_max <= t && rep.generator_abs_max_cont <= t &&
               rep.intervention_min >= -t && rep.intervention_gap_max_tail <= t &&
               rep.complementarity_max <= t;
    return rep;
}

BoundsReport bounds_check(const ValueFunction& v, const ModelParams& params,
                          const QviGrid& grid, double tol) {
    BoundsReport rep;
    rep.upper_slack_min = std::numeric_limits<double>::infinity();
    rep.growth_slack_min = std::numeric_limits<double>::infinity();

    const std::size_t n = std::max<std::size_t>(grid.n_points, 2);
    const double h = grid.x_max / static_cast<double>(n - 1);
    const double mu_star = params.mu_max();
    const double K = params.fixed_cost;

    for (std::size_t i = 0; i < v.n_regimes(); ++i) {
        double prefix_max = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < n; ++k) {
            const double x = h * static_cast<double>(k);
            const double val = v.eval(x, i);
            const double bound = x + mu_star / params.delta + params.rate_cap / params.delta;
            rep.upper_slack_min = std::min(rep.upper_slack_min, bound - val);

            // Growth bound over all pairs via the running maximum of v - x.
            const double m = val - x;
            prefix_max = std::max(prefix_max, m);
            rep.growth_slack_min = std::min(rep.growth_slack_min, m + K - prefix_max);
        }
    }
    rep.pass = rep.upper_slack_min >= -tol && rep.growth_slack_min >= -tol;
    return rep;
}

DividendPolicy synthesize_policy(const ModelParams& params,
                                 const std::vector<double>& b,
                                 const std::vector<double>& B) {
    DividendPolicy policy;
    for (std::size_t i = 0; i < b.size(); ++i) {
        PolicyBand band;
        band.lower_threshold = b[i];
        band.upper_threshold = B[i];
        band.rate_low = (b[i] > 0.0) ? 0.0 : params.rate_cap;
        band.rate_mid = params.rate_cap;
        policy.bands.push_back(band);
    }
    return policy;
}

} // namespace qdl
