#include "qdl/smoothfit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

namespace qdl {

const char* to_string(OrderingTag t) {
    switch (t) {
    case OrderingTag::Nested:             return "Nested";
    case OrderingTag::Interleaved:        return "Interleaved";
    case OrderingTag::NestedSwapped:      return "NestedSwapped";
    case OrderingTag::InterleavedSwapped: return "InterleavedSwapped";
    }
    return "?";
}

const char* to_string(CaseTag t) {
    switch (t) {
    case CaseTag::BothSlopesAbove1: return "Case1";
    case CaseTag::OneSlopeAt1:      return "Case2";
    case CaseTag::BothSlopesAt1:    return "Case3";
    }
    return "?";
}

RegimeMode RegionSpec::mode(std::size_t regime) const {
    if (n_coeffs == 4) return RegimeMode::Diffusive;
    if (n_coeffs == 2)
        return static_cast<int>(regime) == active ? RegimeMode::Diffusive : RegimeMode::Affine;
    return RegimeMode::Affine;
}

std::array<double, 2> particular_constants(const ModelParams& params, RegionKind kind) {
    // Constant ansatz: (lambda_i + delta) F_i - lambda_i F_other = u_i.
    const double l1 = params.regimes[0].lambda_out;
    const double l2 = params.regimes[1].lambda_out;
    const double d = params.delta;
    const double u1 = (kind == RegionKind::PayNoPay || kind == RegionKind::PayPay)
                          ? params.rate_cap : 0.0;
    const double u2 = (kind == RegionKind::PayPay) ? params.rate_cap : 0.0;
    const double det = (l1 + d) * (l2 + d) - l1 * l2;
    if (!(std::abs(det) > 0.0))
        throw Error(ErrorCode::SingularParticularSystem, "constant-ansatz system is singular");
    return {((l2 + d) * u1 + l1 * u2) / det, (l2 * u1 + (l1 + d) * u2) / det};
}

namespace {

/// Which threshold a free coordinate refers to.
struct FreeThr {
    bool is_upper; ///< false: b_i, true: B_i
    int regime;    ///< 0-based
};

std::vector<FreeThr> free_threshold_list(OrderingTag ordering, CaseTag case_tag) {
    if (ordering == OrderingTag::Nested) {
        switch (case_tag) {
        case CaseTag::BothSlopesAbove1:
            return {{false, 0}, {false, 1}, {true, 0}, {true, 1}};
        case CaseTag::OneSlopeAt1:
            return {{false, 1}, {true, 0}, {true, 1}};
        case CaseTag::BothSlopesAt1:
            return {{true, 0}, {true, 1}};
        }
    }
    if (ordering == OrderingTag::Interleaved) {
        switch (case_tag) {
        case CaseTag::BothSlopesAbove1:
            return {{false, 0}, {true, 0}, {false, 1}, {true, 1}};
        case CaseTag::OneSlopeAt1:
            return {{true, 0}, {false, 1}, {true, 1}};
        case CaseTag::BothSlopesAt1:
            throw Error(ErrorCode::InvalidInput,
                        "both-slopes-at-1 only arises with the nested ordering");
        }
    }
    throw Error(ErrorCode::InvalidInput, "swapped orderings are assembled via regime relabeling");
}

double get_thr(const Thresholds& t, const FreeThr& f) {
    return f.is_upper ? t.B[f.regime] : t.b[f.regime];
}

void set_thr(Thresholds& t, const FreeThr& f, double v) {
    (f.is_upper ? t.B[f.regime] : t.b[f.regime]) = v;
}

/// Accumulates the d-th derivative of regime `i`'s value at x in region `r`
/// into an equation row, so that the value equals row . w + known.
void add_eval(const SystemLayout& layout, const RegionSpec& r,
              std::size_t i, double x, int order, double factor,
              Eigen::VectorXd& row, double& known) {
    const RegimeMode m = r.mode(i);
    if (m == RegimeMode::Affine) {
        if (order == 0) {
            known += factor * x;
            row[layout.q_index[i]] += factor;
        } else if (order == 1) {
            known += factor;
        }
        return;
    }
    if (r.n_coeffs == 4) {
        for (int j = 0; j < 4; ++j) {
            const double a = r.roots.roots[j];
            double basis = std::exp(a * (x - r.lo));
            for (int k = 0; k < order; ++k) basis *= a;
            const double link = (i == 0) ? 1.0 : r.roots.link_ratios[j];
            row[r.coeff_offset + j] += factor * basis * link;
        }
        if (order == 0) known += factor * r.particular_const[i];
        return;
    }
    // Single diffusive regime; the other regime's value is x + q_other, so the
    // particular solution is affine with slope p = lambda/(lambda+delta) and a
    // q_other coupling with the same coefficient p (stored during assembly).
    const double p = r.particular_const[0];
    const double r0 = r.particular_const[1];
    for (int j = 0; j < 2; ++j) {
        const double a = r.roots.roots[j];
        double basis = std::exp(a * (x - r.lo));
        for (int k = 0; k < order; ++k) basis *= a;
        row[r.coeff_offset + j] += factor * basis;
    }
    if (order == 0) {
        known += factor * (p * x + r0);
        row[layout.q_index[1 - i]] += factor * p;
    } else if (order == 1) {
        known += factor * p;
    }
}

const RegionSpec& region_starting_at(const SystemLayout& layout, double lo) {
    for (const auto& r : layout.regions)
        if (r.lo == lo && r.n_coeffs > 0) return r;
    throw Error(ErrorCode::InvalidInput, "no diffusive region starting at requested breakpoint");
}

const RegionSpec& region_ending_at(const SystemLayout& layout, double hi) {
    for (const auto& r : layout.regions)
        if (r.hi == hi) return r;
    throw Error(ErrorCode::InvalidInput, "no region ending at requested breakpoint");
}

} // namespace

SystemLayout assemble_segments(const ModelParams& params, OrderingTag ordering,
                               CaseTag case_tag, const Thresholds& thr,
                               const SolveOptions& opt) {
    if (params.regimes.size() != 2)
        throw Error(ErrorCode::RegimeCountUnsupported, "analytic solver needs exactly 2 regimes");

    SystemLayout layout;
    layout.ordering = ordering;
    layout.case_tag = case_tag;
    layout.thresholds = thr;

    struct Piece { double lo, hi; RegionKind kind; int active; };
    std::vector<Piece> pieces;
    const double inf = std::numeric_limits<double>::infinity();
    const double b1 = thr.b[0], b2 = thr.b[1], B1 = thr.B[0], B2 = thr.B[1];

    if (ordering == OrderingTag::Nested) {
        switch (case_tag) {
        case CaseTag::BothSlopesAbove1:
            pieces = {{0.0, b1, RegionKind::NoPayNoPay, -1},
                      {b1, b2, RegionKind::PayNoPay, -1},
                      {b2, B1, RegionKind::PayPay, -1},
                      {B1, B2, RegionKind::SingleRegimePay, 1},
                      {B2, inf, RegionKind::NoPayNoPay, -1}};
            break;
        case CaseTag::OneSlopeAt1:
            pieces = {{0.0, b2, RegionKind::PayNoPay, -1},
                      {b2, B1, RegionKind::PayPay, -1},
                      {B1, B2, RegionKind::SingleRegimePay, 1},
                      {B2, inf, RegionKind::NoPayNoPay, -1}};
            break;
        case CaseTag::BothSlopesAt1:
            pieces = {{0.0, B1, RegionKind::PayPay, -1},
                      {B1, B2, RegionKind::SingleRegimePay, 1},
                      {B2, inf, RegionKind::NoPayNoPay, -1}};
            break;
        }
    } else if (ordering == OrderingTag::Interleaved) {
        switch (case_tag) {
        case CaseTag::BothSlopesAbove1:
            pieces = {{0.0, b1, RegionKind::NoPayNoPay, -1},
                      {b1, B1, RegionKind::PayNoPay, -1},
                      {B1, b2, RegionKind::SingleRegimeNoPay, 1},
                      {b2, B2, RegionKind::SingleRegimePay, 1},
                      {B2, inf, RegionKind::NoPayNoPay, -1}};
            break;
        case CaseTag::OneSlopeAt1:
            pieces = {{0.0, B1, RegionKind::PayNoPay, -1},
                      {B1, b2, RegionKind::SingleRegimeNoPay, 1},
                      {b2, B2, RegionKind::SingleRegimePay, 1},
                      {B2, inf, RegionKind::NoPayNoPay, -1}};
            break;
        case CaseTag::BothSlopesAt1:
            throw Error(ErrorCode::InvalidInput,
                        "both-slopes-at-1 only arises with the nested ordering");
        }
    } else {
        throw Error(ErrorCode::InvalidInput, "assemble the base ordering and relabel regimes instead");
    }

    for (std::size_t k = 0; k + 1 < pieces.size(); ++k)
        if (!(pieces[k].lo < pieces[k].hi))
            throw Error(ErrorCode::InvalidInput, "thresholds do not respect the requested ordering");

    int offset = 0;
    for (std::size_t k = 0; k < pieces.size(); ++k) {
        RegionSpec r;
        r.lo = pieces[k].lo;
        r.hi = pieces[k].hi;
        r.kind = pieces[k].kind;
        r.active = pieces[k].active;
        r.coeff_offset = offset;
        const bool tail = k + 1 == pieces.size();
        RootOptions ro;
        ro.tol_root = opt.tol_root;
        if (tail) {
            r.n_coeffs = 0;
            r.active = -1;
        } else if (r.active < 0) {
            r.n_coeffs = 4;
            r.roots = quartic_roots(params, r.kind, ro);
            r.particular_const = particular_constants(params, r.kind);
        } else {
            r.n_coeffs = 2;
            const auto i = static_cast<std::size_t>(r.active);
            r.roots = single_regime_roots(params, i, r.kind == RegionKind::SingleRegimePay, ro);
            const auto& reg = params.regimes[i];
            const double lam = reg.lambda_out;
            const double mubar = effective_drift(params, r.kind, i);
            const double u = (r.kind == RegionKind::SingleRegimePay) ? params.rate_cap : 0.0;
            const double p = lam / (lam + params.delta);
            r.particular_const = {p, (mubar * p + u) / (lam + params.delta)};
        }
        offset += r.n_coeffs;
        layout.regions.push_back(std::move(r));
    }
    layout.q_index = {offset, offset + 1};
    layout.n_unknowns = offset + 2;
    layout.n_free_thresholds = static_cast<int>(free_threshold_list(ordering, case_tag).size());
    layout.full_unknown_count = offset + layout.n_free_thresholds;
    return layout;
}

InnerSolution inner_linear_solve(const ModelParams& params, const SystemLayout& layout,
                                 const SolveOptions& opt) {
    const int n = layout.n_unknowns;
    std::vector<Eigen::VectorXd> rows;
    std::vector<double> rhs;

    // v(0, i) = 0.
    for (std::size_t i = 0; i < 2; ++i) {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
        double known = 0.0;
        add_eval(layout, layout.regions.front(), i, 0.0, 0, 1.0, row, known);
        rows.push_back(std::move(row));
        rhs.push_back(-known);
    }

    // Matching at interior breakpoints, plus the impulse identity
    // q_i = v(b_i, i) - b_i - K once a regime enters its intervention region.
    for (std::size_t k = 0; k + 1 < layout.regions.size(); ++k) {
        const RegionSpec& left = layout.regions[k];
        const RegionSpec& right = layout.regions[k + 1];
        const double t = left.hi;
        for (std::size_t i = 0; i < 2; ++i) {
            const RegimeMode ml = left.mode(i);
            const RegimeMode mr = right.mode(i);
            if (ml == RegimeMode::Affine) continue; // stays affine once entered
            const int orders = (mr == RegimeMode::Diffusive) ? 2 : 1;
            for (int d = 0; d < orders; ++d) {
                Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
                double known = 0.0;
                add_eval(layout, left, i, t, d, 1.0, row, known);
                add_eval(layout, right, i, t, d, -1.0, row, known);
                rows.push_back(std::move(row));
                rhs.push_back(-known);
            }
            if (mr == RegimeMode::Affine) {
                const double bi = layout.thresholds.b[i];
                const RegionSpec& host =
                    (bi == 0.0) ? layout.regions.front() : region_starting_at(layout, bi);
                Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
                double known = bi + params.fixed_cost;
                row[layout.q_index[i]] += 1.0;
                add_eval(layout, host, i, bi, 0, -1.0, row, known);
                rows.push_back(std::move(row));
                rhs.push_back(-known);
            }
        }
    }

    if (static_cast<int>(rows.size()) != n)
        throw Error(ErrorCode::InvalidInput, "inner system is not square");

    Eigen::MatrixXd A(n, n);
    Eigen::VectorXd bvec(n);
    for (int r = 0; r < n; ++r) {
        A.row(r) = rows[static_cast<std::size_t>(r)];
        bvec[r] = rhs[static_cast<std::size_t>(r)];
    }

    // Column equilibration keeps the exponential columns comparable.
    Eigen::VectorXd colscale(n);
    for (int c = 0; c < n; ++c) {
        const double m = A.col(c).cwiseAbs().maxCoeff();
        colscale[c] = (m > 0.0) ? m : 1.0;
    }
    const Eigen::MatrixXd As = A * colscale.cwiseInverse().asDiagonal();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(As, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(n - 1);
    const double cond = (smin > 0.0) ? smax / smin : std::numeric_limits<double>::infinity();
    if (!(cond < opt.cond_max)) {
        std::ostringstream msg;
        msg << "smooth-fit linear block condition number " << cond;
        throw Error(ErrorCode::IllConditionedSystem, msg.str());
    }

    InnerSolution sol;
    sol.cond = cond;
    sol.coeffs = colscale.cwiseInverse().asDiagonal() * svd.solve(bvec);
    sol.linear_residual = (A * sol.coeffs - bvec).cwiseAbs().maxCoeff();

    // Leftover slope-one conditions, one per free threshold.
    for (const FreeThr& f : free_threshold_list(layout.ordering, layout.case_tag)) {
        const double t = get_thr(layout.thresholds, f);
        const RegionSpec& r =
            f.is_upper ? region_ending_at(layout, t) : region_starting_at(layout, t);
        Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
        double known = 0.0;
        add_eval(layout, r, static_cast<std::size_t>(f.regime), t, 1, 1.0, row, known);
        sol.residual.push_back(row.dot(sol.coeffs) + known - 1.0);
    }
    return sol;
}

ValueFunction build_value_function(const SystemLayout& layout, const Eigen::VectorXd& w) {
    std::vector<std::vector<ExpSegment>> per_regime(2);
    for (std::size_t i = 0; i < 2; ++i) {
        for (const RegionSpec& r : layout.regions) {
            ExpSegment seg;
            seg.lo = r.lo;
            if (r.mode(i) == RegimeMode::Affine) {
                seg.hi = std::numeric_limits<double>::infinity();
                seg.slope = 1.0;
                seg.intercept = w[layout.q_index[i]];
                per_regime[i].push_back(std::move(seg));
                break;
            }
            seg.hi = r.hi;
            seg.shift = r.lo;
            if (r.n_coeffs == 4) {
                for (int j = 0; j < 4; ++j) {
                    const double link = (i == 0) ? 1.0 : r.roots.link_ratios[j];
                    seg.terms.push_back({w[r.coeff_offset + j] * link, r.roots.roots[j]});
                }
                seg.slope = 0.0;
                seg.intercept = r.particular_const[i];
            } else {
                for (int j = 0; j < 2; ++j)
                    seg.terms.push_back({w[r.coeff_offset + j], r.roots.roots[j]});
                const double p = r.particular_const[0];
                seg.slope = p;
                seg.intercept = r.particular_const[1] + p * w[layout.q_index[1 - i]];
            }
            per_regime[i].push_back(std::move(seg));
        }
    }
    return ValueFunction(std::move(per_regime));
}

namespace {

/// Projects a chain of free thresholds so the ordering stays strict.
std::vector<double> project_chain(std::vector<double> t, double gap, double cap) {
    double prev = 0.0;
    for (double& v : t) {
        if (!std::isfinite(v)) v = prev + gap;
        v = std::clamp(v, prev + gap, std::max(prev + gap, cap));
        prev = v;
    }
    return t;
}

Thresholds thresholds_from_chain(OrderingTag ordering, CaseTag case_tag,
                                 const std::vector<double>& t) {
    Thresholds thr; // pinned entries stay 0
    const auto list = free_threshold_list(ordering, case_tag);
    for (std::size_t k = 0; k < list.size(); ++k) set_thr(thr, list[k], t[k]);
    return thr;
}

std::optional<std::vector<double>> try_residual(const ModelParams& params, OrderingTag ordering,
                                                CaseTag case_tag, const std::vector<double>& t,
                                                const SolveOptions& opt) {
    try {
        const Thresholds thr = thresholds_from_chain(ordering, case_tag, t);
        const SystemLayout layout = assemble_segments(params, ordering, case_tag, thr, opt);
        return inner_linear_solve(params, layout, opt).residual;
    } catch (const Error&) {
        return std::nullopt;
    }
}

double norm_inf(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

} // namespace

Thresholds outer_threshold_solve(const ModelParams& params, OrderingTag ordering,
                                 CaseTag case_tag, const SolveOptions& opt) {
    const auto list = free_threshold_list(ordering, case_tag);
    const auto m = list.size();
    const double gap = opt.gap_min;
    const double cap = 20.0 * (params.mu_max() + params.rate_cap) / params.delta +
                       10.0 * params.fixed_cost + 10.0;

    // Initial guesses: decoupled one-regime anchors, scaled variants, caller hints.
    std::vector<std::vector<double>> starts;
    auto add_start = [&](const Thresholds& thr) {
        std::vector<double> t;
        for (const auto& f : list) t.push_back(get_thr(thr, f));
        starts.push_back(project_chain(std::move(t), gap, cap));
    };

    std::array<std::optional<SingleRegimeSolution>, 2> anchor;
    for (std::size_t i = 0; i < 2; ++i) {
        try {
            anchor[i] = solve_single_regime(params.regimes[i], params.delta, params.rate_cap,
                                            params.fixed_cost, opt);
        } catch (const Error&) {
            anchor[i] = std::nullopt;
        }
    }
    for (double scale : {1.0, 0.6, 1.6, 2.5}) {
        Thresholds thr;
        for (std::size_t i = 0; i < 2; ++i) {
            const double bdef = 0.3 * (params.fixed_cost + 1.0);
            const double Bdef = params.fixed_cost + params.regimes[i].sigma + 1.0;
            thr.b[i] = scale * (anchor[i] ? anchor[i]->b : bdef);
            thr.B[i] = scale * (anchor[i] ? anchor[i]->B : Bdef);
        }
        if (ordering == OrderingTag::Nested) {
            if (thr.b[0] > thr.b[1]) std::swap(thr.b[0], thr.b[1]);
            if (thr.B[0] > thr.B[1]) std::swap(thr.B[0], thr.B[1]);
            thr.B[0] = std::max(thr.B[0], thr.b[1] + gap);
        } else {
            thr.b[1] = std::max(thr.b[1], thr.B[0] * (1.0 + 0.2 * scale));
            thr.B[1] = std::max(thr.B[1], thr.b[1] + std::max(1.0, thr.B[0] - thr.b[0]));
        }
        add_start(thr);
    }
    for (const Thresholds& h : opt.hints) add_start(h);

    for (const auto& start : starts) {
        std::vector<double> t = start;
        auto res = try_residual(params, ordering, case_tag, t, opt);
        if (!res) continue;
        double rn = norm_inf(*res);
        bool failed = false;

        for (int it = 0; it < opt.max_outer_iter && rn > opt.tol_fit; ++it) {
            // Forward-difference Jacobian, stepping away from the chain bounds.
            Eigen::MatrixXd J(m, m);
            Eigen::VectorXd R(m);
            for (std::size_t k = 0; k < m; ++k) R[static_cast<Eigen::Index>(k)] = (*res)[k];
            for (std::size_t c = 0; c < m; ++c) {
                double h = 1e-7 * std::max(1.0, std::abs(t[c]));
                const double room_up = (c + 1 < m) ? (t[c + 1] - t[c]) : cap - t[c];
                if (h > 0.25 * room_up) h = -h; // step backwards near the bound
                std::vector<double> tp = t;
                tp[c] += h;
                auto rp = try_residual(params, ordering, case_tag, tp, opt);
                if (!rp) {
                    tp[c] = t[c] - h;
                    rp = try_residual(params, ordering, case_tag, tp, opt);
                    h = -h;
                }
                if (!rp) { failed = true; break; }
                for (std::size_t k = 0; k < m; ++k)
                    J(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) =
                        ((*rp)[k] - (*res)[k]) / h;
            }
            if (failed) break;

            Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
            if (!lu.isInvertible()) { failed = true; break; }
            const Eigen::VectorXd step = lu.solve(-R);

            double alpha = 1.0;
            bool accepted = false;
            for (int ls = 0; ls < 40; ++ls, alpha *= 0.5) {
                std::vector<double> tn = t;
                for (std::size_t k = 0; k < m; ++k)
                    tn[k] += alpha * step[static_cast<Eigen::Index>(k)];
                tn = project_chain(std::move(tn), gap, cap);
                auto rnext = try_residual(params, ordering, case_tag, tn, opt);
                if (!rnext) continue;
                const double rn2 = norm_inf(*rnext);
                if (rn2 < rn * (1.0 - 1e-4 * alpha) || rn2 < opt.tol_fit) {
                    t = std::move(tn);
                    res = std::move(rnext);
                    rn = rn2;
                    accepted = true;
                    break;
                }
            }
            if (!accepted) { failed = true; break; }
        }
        if (!failed && rn <= opt.tol_fit)
            return thresholds_from_chain(ordering, case_tag, t);
    }
    std::ostringstream msg;
    msg << "outer solve found no thresholds for " << to_string(ordering) << "/"
        << to_string(case_tag);
    throw Error(ErrorCode::NoRoot, msg.str());
}

SideConditions side_conditions(const ModelParams& params, const SystemLayout& layout,
                               const ValueFunction& v, const SolveOptions& opt) {
    SideConditions sc;
    sc.slope0_regime1 = v.eval_deriv(0.0, 0);
    sc.slope0_regime2 = v.eval_deriv(0.0, 1);

    // Literal weighted root condition of the first region (anchored at 0):
    // sum_j A_j phi_1(alpha_j) alpha_j, with A_j the regime-1 coefficients.
    const RegionSpec& r0 = layout.regions.front();
    const double l1 = params.regimes[0].lambda_out;
    double ws = 0.0;
    if (r0.n_coeffs == 4) {
        const auto& terms = v.segments(0).front().terms;
        for (const auto& term : terms)
            ws += term.coeff *
                  phi(params.regimes[0], effective_drift(params, r0.kind, 0), params.delta,
                      term.exponent) *
                  term.exponent;
    } else {
        ws = l1 * sc.slope0_regime2;
    }
    sc.weighted_sum = ws;

    const double tol = opt.tol_fit;
    const double wnorm = std::max(1.0, l1);
    const double s1 = sc.slope0_regime1 - 1.0;
    const double s2 = sc.slope0_regime2 - 1.0;
    switch (layout.case_tag) {
    case CaseTag::BothSlopesAbove1:
        sc.slacks = {s1, s2, (ws - l1) / wnorm};
        break;
    case CaseTag::OneSlopeAt1:
        sc.slacks = {-std::abs(s1), s2, (ws - l1) / wnorm};
        break;
    case CaseTag::BothSlopesAt1:
        sc.slacks = {-std::abs(s1), -std::abs(s2), -std::abs(ws - l1) / wnorm};
        break;
    }
    sc.pass = std::all_of(sc.slacks.begin(), sc.slacks.end(),
                          [&](double s) { return s >= -tol; });
    if (sc.pass) {
        if (layout.case_tag == CaseTag::BothSlopesAbove1)
            sc.boundary = std::min(s1, s2) <= tol;
        else if (layout.case_tag == CaseTag::OneSlopeAt1)
            sc.boundary = s2 <= tol;
    }
    return sc;
}

namespace {

bool regimes_symmetric(const ModelParams& p) {
    const auto& a = p.regimes[0];
    const auto& b = p.regimes[1];
    auto close = [](double x, double y) {
        return std::abs(x - y) <= 1e-9 * std::max({1.0, std::abs(x), std::abs(y)});
    };
    return close(a.mu, b.mu) && close(a.sigma, b.sigma) && close(a.lambda_out, b.lambda_out);
}

QviGrid default_grid(const std::array<double, 2>& B, std::size_t n_points) {
    return {1.5 * std::max(B[0], B[1]), n_points};
}

OrderingTag swapped_tag(OrderingTag base) {
    return base == OrderingTag::Nested ? OrderingTag::NestedSwapped
                                       : OrderingTag::InterleavedSwapped;
}

ValueFunction swap_value_regimes(const ValueFunction& v) {
    return ValueFunction({v.segments(1), v.segments(0)});
}

/// Attempts one (ordering, case) candidate in the (possibly relabeled) frame
/// `p`; returns the bundle in the original frame on success. `deferred` marks
/// a Case-1/2 pass sitting at a case boundary (a lower-dimensional case
/// describes the same value function and is preferred).
std::optional<SolutionBundle> try_candidate(const ModelParams& original, const ModelParams& p,
                                            bool swapped, OrderingTag ordering, CaseTag case_tag,
                                            const SolveOptions& opt, std::string& note,
                                            bool& deferred) {
    SolveOptions o = opt;
    if (swapped) {
        o.hints.clear();
        for (const Thresholds& h : opt.hints)
            o.hints.push_back({{h.b[1], h.b[0]}, {h.B[1], h.B[0]}});
    }
    const Thresholds thr = outer_threshold_solve(p, ordering, case_tag, o);
    const SystemLayout layout = assemble_segments(p, ordering, case_tag, thr, o);
    const InnerSolution inner = inner_linear_solve(p, layout, o);
    const ValueFunction v = build_value_function(layout, inner.coeffs);
    const SideConditions sc = side_conditions(p, layout, v, o);
    if (!sc.pass) { note = "side conditions failed"; return std::nullopt; }

    const QviGrid grid = default_grid(thr.B, opt.qvi_points);
    const DividendPolicy pol = synthesize_policy(p, {thr.b[0], thr.b[1]}, {thr.B[0], thr.B[1]});
    const QviReport qvi = qvi_check(v, p, pol, grid, opt.tol_qvi);
    if (!qvi.pass) { note = "variational-inequality check failed"; return std::nullopt; }
    const BoundsReport bounds = bounds_check(v, p, grid);
    if (!bounds.pass) { note = "value bounds check failed"; return std::nullopt; }

    SolutionBundle out;
    out.params = original;
    out.ordering = swapped ? swapped_tag(ordering) : ordering;
    out.case_tag = case_tag;
    out.b = swapped ? std::array<double, 2>{thr.b[1], thr.b[0]} : thr.b;
    out.B = swapped ? std::array<double, 2>{thr.B[1], thr.B[0]} : thr.B;
    out.value = swapped ? swap_value_regimes(v) : v;
    out.policy = synthesize_policy(original, {out.b[0], out.b[1]}, {out.B[0], out.B[1]});
    out.smooth_fit_residual_max = std::max(norm_inf(inner.residual), inner.linear_residual);
    out.side_slacks = sc.slacks;
    out.qvi = qvi;
    out.bounds = bounds;
    deferred = sc.boundary && case_tag != CaseTag::BothSlopesAt1;
    note = deferred ? "passed (at a case boundary, deferred)" : "passed";
    return out;
}

SolutionBundle solve_symmetric(const ModelParams& params, const SolveOptions& opt) {
    const SingleRegimeSolution s = solve_single_regime(
        params.regimes[0], params.delta, params.rate_cap, params.fixed_cost, opt);

    SolutionBundle out;
    out.params = params;
    out.ordering = OrderingTag::Nested;
    out.case_tag = s.boundary_case ? CaseTag::BothSlopesAt1 : CaseTag::BothSlopesAbove1;
    out.b = {s.b, s.b};
    out.B = {s.B, s.B};
    out.value = ValueFunction({s.segments, s.segments});
    out.policy = synthesize_policy(params, {s.b, s.b}, {s.B, s.B});
    out.candidate_log.push_back("Symmetric/one-regime: solved");

    const double d0 = out.value.eval_deriv(0.0, 0);
    const double l1 = params.regimes[0].lambda_out;
    const double wnorm = std::max(1.0, l1);
    if (s.boundary_case)
        out.side_slacks = {-std::abs(d0 - 1.0), -std::abs(d0 - 1.0),
                           -std::abs(l1 * d0 - l1) / wnorm};
    else
        out.side_slacks = {d0 - 1.0, d0 - 1.0, (l1 * d0 - l1) / wnorm};
    const bool side_ok = std::all_of(out.side_slacks.begin(), out.side_slacks.end(),
                                     [&](double x) { return x >= -opt.tol_fit; });

    const QviGrid grid = default_grid(out.B, opt.qvi_points);
    out.qvi = qvi_check(out.value, params, out.policy, grid, opt.tol_qvi);
    out.bounds = bounds_check(out.value, params, grid);
    if (!side_ok || !out.qvi.pass || !out.bounds.pass)
        throw Error(ErrorCode::NoValidCase,
                    "symmetric instance fails the verification gates; use the grid solver");
    return out;
}

} // namespace

SolutionBundle classify_and_solve(const ModelParams& params, const SolveOptions& opt) {
    validate(params);
    if (params.regimes.size() != 2)
        throw Error(ErrorCode::RegimeCountUnsupported, "analytic solver needs exactly 2 regimes");

    if (regimes_symmetric(params)) return solve_symmetric(params, opt);

    struct Cand { bool swapped; OrderingTag ordering; CaseTag case_tag; };
    const std::vector<Cand> cands = {
        {false, OrderingTag::Nested, CaseTag::BothSlopesAbove1},
        {false, OrderingTag::Nested, CaseTag::OneSlopeAt1},
        {false, OrderingTag::Nested, CaseTag::BothSlopesAt1},
        {false, OrderingTag::Interleaved, CaseTag::BothSlopesAbove1},
        {false, OrderingTag::Interleaved, CaseTag::OneSlopeAt1},
        {true, OrderingTag::Nested, CaseTag::BothSlopesAbove1},
        {true, OrderingTag::Nested, CaseTag::OneSlopeAt1},
        {true, OrderingTag::Nested, CaseTag::BothSlopesAt1},
        {true, OrderingTag::Interleaved, CaseTag::BothSlopesAbove1},
        {true, OrderingTag::Interleaved, CaseTag::OneSlopeAt1},
    };

    const ModelParams swapped_params = swap_regimes(params);
    std::vector<std::string> log;
    std::optional<SolutionBundle> held; // case-boundary passer, kept as fallback

    for (const Cand& c : cands) {
        const std::string label =
            std::string(to_string(c.swapped ? swapped_tag(c.ordering) : c.ordering)) + "/" +
            to_string(c.case_tag);
        std::string note;
        bool deferred = false;
        try {
            auto bundle = try_candidate(params, c.swapped ? swapped_params : params, c.swapped,
                                        c.ordering, c.case_tag, opt, note, deferred);
            log.push_back(label + ": " + note);
            if (bundle) {
                bundle->candidate_log = log;
                if (deferred) {
                    if (!held) held = std::move(bundle);
                } else {
                    return *bundle;
                }
            }
        } catch (const Error& e) {
            log.push_back(label + ": " + std::string(to_string(e.code())));
        }
    }
    if (held) {
        held->candidate_log = log;
        return *held;
    }
    throw Error(ErrorCode::NoValidCase, "no (ordering, case) candidate passed all gates");
}

SingleRegimeSolution solve_single_regime(const RegimeParams& regime, double delta, double rate_cap,
                                         double fixed_cost, const SolveOptions& opt) {
    if (!(regime.sigma > 0.0) || !(delta > 0.0) || !(rate_cap > 0.0) || !(fixed_cost > 0.0))
        throw Error(ErrorCode::NonPositiveParameter, "one-regime solver needs positive inputs");
    if (!(rate_cap < regime.mu))
        throw Error(ErrorCode::AssumptionHViolated, "rate cap must stay below the drift");

    // Decoupled problem: no switching, so solve with the regime alone.
    RegimeParams iso = regime;
    iso.lambda_out = 0.0;
    ModelParams mp;
    mp.regimes = {iso, iso};
    mp.delta = delta;
    mp.rate_cap = rate_cap;
    mp.fixed_cost = fixed_cost;

    RootOptions ro;
    ro.tol_root = opt.tol_root;
    const RootSet no_pay = single_regime_roots(mp, 0, false, ro);
    const RootSet pay = single_regime_roots(mp, 0, true, ro);
    const double n1 = no_pay.roots[0], n2 = no_pay.roots[1];
    const double p1 = pay.roots[0], p2 = pay.roots[1];
    const double Ld = rate_cap / delta;
    const double inf = std::numeric_limits<double>::infinity();

    // Interior layout: [0,b) no-pay (a1,a2), [b,B) pay (c1,c2) + L/delta,
    // tail x + q. Inner unknowns w = (a1,a2,c1,c2,q).
    auto inner_interior = [&](double b, double B) {
        Eigen::Matrix<double, 5, 5> A = Eigen::Matrix<double, 5, 5>::Zero();
        Eigen::Matrix<double, 5, 1> r = Eigen::Matrix<double, 5, 1>::Zero();
        const double e1 = std::exp(n1 * b), e2 = std::exp(n2 * b);
        const double f1 = std::exp(p1 * (B - b)), f2 = std::exp(p2 * (B - b));
        A(0, 0) = 1; A(0, 1) = 1;                                           // v(0) = 0
        A(1, 0) = e1; A(1, 1) = e2; A(1, 2) = -1; A(1, 3) = -1;             // continuity at b
        r(1) = Ld;
        A(2, 0) = n1 * e1; A(2, 1) = n2 * e2; A(2, 2) = -p1; A(2, 3) = -p2; // C1 at b
        A(3, 2) = f1; A(3, 3) = f2; A(3, 4) = -1;                           // continuity at B
        r(3) = B - Ld;
        A(4, 2) = -1; A(4, 3) = -1; A(4, 4) = 1;                            // q = v(b) - b - K
        r(4) = Ld - b - fixed_cost;
        const Eigen::Matrix<double, 5, 1> w = A.fullPivLu().solve(r);
        const double res_b = w(2) * p1 + w(3) * p2 - 1.0;
        const double res_B = w(2) * p1 * f1 + w(3) * p2 * f2 - 1.0;
        return std::tuple{w, res_b, res_B};
    };

    const double scale0 = std::max({fixed_cost, regime.sigma / std::sqrt(delta),
                                    0.25 * regime.mu / delta});
    SingleRegimeSolution best;
    bool have_interior = false;

    for (double fB : {0.5, 1.0, 2.0, 4.0, 8.0, 0.25}) {
        for (double fb : {1.0 / 3.0, 0.1}) {
            double B = fB * scale0;
            double b = fb * B;
            Eigen::Matrix<double, 5, 1> w;
            double rb = 0.0, rB = 0.0;
            bool ok = true;
            for (int it = 0; it < opt.max_outer_iter; ++it) {
                std::tie(w, rb, rB) = inner_interior(b, B);
                const double rn = std::max(std::abs(rb), std::abs(rB));
                if (rn <= opt.tol_fit) break;
                const double h = 1e-7 * std::max(1.0, B);
                auto [w1, rb1, rB1] = inner_interior(b + h, B);
                auto [w2, rb2, rB2] = inner_interior(b, B + h);
                Eigen::Matrix2d J;
                J << (rb1 - rb) / h, (rb2 - rb) / h, (rB1 - rB) / h, (rB2 - rB) / h;
                const Eigen::Vector2d step = J.fullPivLu().solve(Eigen::Vector2d(-rb, -rB));
                if (!step.allFinite()) { ok = false; break; }
                double alpha = 1.0;
                bool accepted = false;
                for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
                    const double bn = std::max(opt.gap_min, b + alpha * step(0));
                    const double Bn = std::max(bn + opt.gap_min, B + alpha * step(1));
                    auto [wn, rbn, rBn] = inner_interior(bn, Bn);
                    if (std::max(std::abs(rbn), std::abs(rBn)) < rn) {
                        b = bn; B = Bn; accepted = true;
                        break;
                    }
                }
                if (!accepted) { ok = false; break; }
            }
            if (!ok) continue;
            std::tie(w, rb, rB) = inner_interior(b, B);
            if (std::max(std::abs(rb), std::abs(rB)) > opt.tol_fit) continue;
            if (b < 10.0 * opt.gap_min) continue; // effectively the boundary case
            const double d0 = w(0) * n1 + w(1) * n2;
            if (d0 < 1.0 - opt.tol_fit) continue;
            best.b = b;
            best.B = B;
            best.boundary_case = false;
            best.segments = {{0.0, b, 0.0, {{w(0), n1}, {w(1), n2}}, 0.0, 0.0},
                             {b, B, b, {{w(2), p1}, {w(3), p2}}, 0.0, Ld},
                             {B, inf, 0.0, {}, 1.0, w(4)}};
            have_interior = true;
            break;
        }
        if (have_interior) break;
    }
    if (have_interior) return best;

    // Boundary layout: [0,B) pay (c1,c2) + L/delta, tail x + q with q = -K.
    auto inner_boundary = [&](double B) {
        Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
        Eigen::Vector3d r = Eigen::Vector3d::Zero();
        const double f1 = std::exp(p1 * B), f2 = std::exp(p2 * B);
        A(0, 0) = 1; A(0, 1) = 1;                  // v(0) = 0
        r(0) = -Ld;
        A(1, 0) = f1; A(1, 1) = f2; A(1, 2) = -1;  // continuity at B
        r(1) = B - Ld;
        A(2, 0) = -1; A(2, 1) = -1; A(2, 2) = 1;   // q = v(0) - K
        r(2) = Ld - fixed_cost;
        const Eigen::Vector3d w = A.fullPivLu().solve(r);
        return std::pair{w, w(0) * p1 * f1 + w(1) * p2 * f2 - 1.0};
    };
    for (double fB : {0.5, 1.0, 2.0, 4.0, 8.0, 0.25, 16.0}) {
        double B = fB * scale0;
        Eigen::Vector3d w;
        double rB = 0.0;
        bool ok = true;
        for (int it = 0; it < opt.max_outer_iter; ++it) {
            std::tie(w, rB) = inner_boundary(B);
            if (std::abs(rB) <= opt.tol_fit) break;
            const double h = 1e-7 * std::max(1.0, B);
            const double d = (inner_boundary(B + h).second - rB) / h;
            if (!(std::abs(d) > 0.0)) { ok = false; break; }
            double alpha = 1.0;
            bool accepted = false;
            for (int ls = 0; ls < 30; ++ls, alpha *= 0.5) {
                const double Bn = std::max(opt.gap_min, B - alpha * rB / d);
                if (std::abs(inner_boundary(Bn).second) < std::abs(rB)) {
                    B = Bn;
                    accepted = true;
                    break;
                }
            }
            if (!accepted) { ok = false; break; }
        }
        if (!ok) continue;
        std::tie(w, rB) = inner_boundary(B);
        if (std::abs(rB) > opt.tol_fit) continue;
        best.b = 0.0;
        best.B = B;
        best.boundary_case = true;
        best.segments = {{0.0, B, 0.0, {{w(0), p1}, {w(1), p2}}, 0.0, Ld},
                         {B, inf, 0.0, {}, 1.0, w(2)}};
        return best;
    }
    throw Error(ErrorCode::NoRoot, "one-regime threshold solve did not converge");
}

} // namespace qdl
