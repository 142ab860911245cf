#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "qdl/oracle.hpp"
#include "qdl/smoothfit.hpp"

using namespace qdl;

namespace {

ModelParams reference_params() {
    ModelParams p;
    p.regimes = {{2.0, 1.0, 0.5}, {1.0, 1.5, 0.8}};
    p.delta = 0.1;
    p.rate_cap = 0.5;
    p.fixed_cost = 1.0;
    return p;
}

ModelParams boundary_params() {
    // Both post-impulse targets at the ruin boundary (large fixed cost).
    ModelParams p;
    p.regimes = {{1.0, 1.0, 0.5}, {1.1, 1.0657935501635094, 0.5}};
    p.delta = 0.8;
    p.rate_cap = 0.3;
    p.fixed_cost = 2.3882362159641195;
    return p;
}

double sup_gap(const SolutionBundle& sol, const GridSolution& g, double span) {
    double sup = 0.0;
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t k = 0; k < g.x.size(); ++k) {
            if (g.x[k] > span) break;
            sup = std::max(sup, std::abs(sol.value.eval(g.x[k], i) - g.v[i][k]));
        }
    return sup;
}

} // namespace

TEST_CASE("grid solution matches the analytic value function") {
    const ModelParams p = reference_params();
    const SolutionBundle sol = classify_and_solve(p);

    OracleOptions opt;
    opt.n_cells = 2000;
    const double span = 1.5 * std::max(sol.B[0], sol.B[1]);
    opt.x_max = span + 3.0 * (p.mu_max() + p.rate_cap) / p.delta;
    const GridSolution g = solve_grid(p, opt);

    double scale = 1.0;
    for (double x : g.x)
        if (x <= span)
            scale = std::max({scale, sol.value.eval(x, 0), sol.value.eval(x, 1)});
    CHECK(sup_gap(sol, g, span) <= 1e-3 * (1.0 + scale));

    const GridBoundaries gb = extract_boundaries(g);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(std::abs(gb.B[i] - sol.B[i]) <= 2.0 * g.h);
        CHECK(std::abs(gb.b[i] - sol.b[i]) <= 2.0 * g.h);
        // Interior b: the continuous rate switches on at the same level.
        CHECK(std::abs(gb.rate_switch[i] - sol.b[i]) <= 2.0 * g.h);
    }
}

TEST_CASE("grid values are monotone in the surplus") {
    OracleOptions opt;
    opt.n_cells = 400;
    const GridSolution g = solve_grid(boundary_params(), opt);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t k = 1; k < g.x.size(); ++k)
            CHECK(g.v[i][k] >= g.v[i][k - 1] - 1e-12);
}

TEST_CASE("refining the grid shrinks the gap to the analytic solution") {
    const ModelParams p = boundary_params();
    const SolutionBundle sol = classify_and_solve(p);
    const double span = 1.5 * std::max(sol.B[0], sol.B[1]);

    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t n : {500u, 1000u, 2000u}) {
        OracleOptions opt;
        opt.n_cells = n;
        opt.x_max = span + 3.0 * (p.mu_max() + p.rate_cap) / p.delta;
        const GridSolution g = solve_grid(p, opt);
        const double gap = sup_gap(sol, g, span);
        CHECK(gap < prev);
        prev = gap;

        const GridBoundaries gb = extract_boundaries(g);
        CHECK(gb.b[0] == 0.0); // boundary case: impulses jump to the origin
        CHECK(gb.b[1] == 0.0);
        CHECK(std::abs(gb.B[0] - sol.B[0]) <= 2.0 * g.h);
        CHECK(std::abs(gb.B[1] - sol.B[1]) <= 2.0 * g.h);
    }
    CHECK(prev < 1e-5);
}

TEST_CASE("the default domain covers the impulse region") {
    const ModelParams p = boundary_params();
    OracleOptions opt;
    opt.n_cells = 300;
    const GridSolution g = solve_grid(p, opt); // x_max chosen automatically
    const double expected =
        3.0 * (p.mu_max() + p.rate_cap) / p.delta + 10.0 * p.fixed_cost;
    CHECK(g.x.back() == doctest::Approx(expected).epsilon(1e-12));
    const GridBoundaries gb = extract_boundaries(g);
    CHECK(std::isfinite(gb.B[0]));
    CHECK(std::isfinite(gb.B[1]));
}

TEST_CASE("error paths: bad grid, missing regime, iteration cap") {
    const ModelParams p = reference_params();
    {
        OracleOptions opt;
        opt.n_cells = 4;
        CHECK_THROWS_AS(solve_grid(p, opt), Error);
    }
    {
        ModelParams one = p;
        one.regimes.resize(1);
        CHECK_THROWS_AS(solve_grid(one, {}), Error);
    }
    {
        OracleOptions opt;
        opt.n_cells = 500;
        opt.max_policy_iter = 2;
        try {
            solve_grid(p, opt);
            FAIL("expected NotConverged");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::NotConverged);
        }
    }
}
