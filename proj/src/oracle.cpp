#include "qdl/oracle.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>

namespace qdl {

namespace {

struct Discretization {
    std::size_t n;   ///< cells; nodes 0..n
    double h;
    const ModelParams& p;

    std::size_t idx(std::size_t i, std::size_t k) const { return i * (n + 1) + k; }
};

/// One-dimensional stencil weights for 0.5*sigma^2 v'' + (mu-u) v'.
/// Central differencing with the Il'in/Allen-Southwell exponentially fitted
/// diffusion a_hat = a * rho * coth(rho), rho = (mu-u) h / (2a): second order
/// where the cell Peclet number is small, exact on the local convection layer
/// exponential where it is not, and an M-matrix for every h since
/// a_hat / h^2 >= |mu-u| / (2h) always.
struct Stencil {
    double dn, up;
};

Stencil stencil(const RegimeParams& reg, double u, double h) {
    const double a = 0.5 * reg.sigma * reg.sigma;
    const double m = reg.mu - u; // positive under assumption (H)
    const double rho = m * h / (2.0 * a);
    const double a_hat = rho < 1e-8 ? a : a * rho / std::tanh(rho);
    const double c = m / (2.0 * h);
    return {a_hat / (h * h) - c, a_hat / (h * h) + c};
}

/// Linear solve for the value of a fixed policy.
std::vector<std::vector<double>> solve_policy(const Discretization& d,
                                              const std::vector<std::vector<GridControl>>& policy) {
    const std::size_t nr = d.p.n_regimes();
    const std::size_t N = nr * (d.n + 1);
    std::vector<Eigen::Triplet<double>> trips;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
    trips.reserve(5 * N);

    for (std::size_t i = 0; i < nr; ++i) {
        const auto& reg = d.p.regimes[i];
        for (std::size_t k = 0; k <= d.n; ++k) {
            const auto row = static_cast<Eigen::Index>(d.idx(i, k));
            if (k == 0) {
                trips.emplace_back(row, row, 1.0); // ruin boundary v(0) = 0
                continue;
            }
            const GridControl& c = policy[i][k];
            if (c.impulse) {
                // v(x_k) = v(x_j) + (x_k - x_j) - K
                trips.emplace_back(row, row, 1.0);
                trips.emplace_back(row, static_cast<Eigen::Index>(d.idx(i, c.target)), -1.0);
                rhs[row] = d.h * static_cast<double>(k - c.target) - d.p.fixed_cost;
                continue;
            }
            const double u = c.rate;
            const Stencil s = stencil(reg, u, d.h);
            const double diag = -(s.dn + s.up + d.p.delta + reg.lambda_out);
            trips.emplace_back(row, row, diag);
            if (k < d.n) {
                trips.emplace_back(row, static_cast<Eigen::Index>(d.idx(i, k - 1)), s.dn);
                trips.emplace_back(row, static_cast<Eigen::Index>(d.idx(i, k + 1)), s.up);
            } else {
                // Neumann v'(x_max) = 1 via the ghost node v_{n+1} = v_{n-1} + 2h.
                trips.emplace_back(row, static_cast<Eigen::Index>(d.idx(i, k - 1)), s.dn + s.up);
                rhs[row] -= s.up * 2.0 * d.h;
            }
            // Regime coupling (two regimes: the other one; general N: uniform
            // jump to the single other regime is all the model supports, so a
            // two-regime chain is assumed here as everywhere else).
            const std::size_t other = 1 - i;
            trips.emplace_back(row, static_cast<Eigen::Index>(d.idx(other, k)), reg.lambda_out);
            rhs[row] -= u;
        }
    }

    Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
    A.setFromTriplets(trips.begin(), trips.end());
    A.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success)
        throw Error(ErrorCode::NotConverged, "policy linear system factorization failed");
    const Eigen::VectorXd sol = lu.solve(rhs);
    if (lu.info() != Eigen::Success)
        throw Error(ErrorCode::NotConverged, "policy linear system solve failed");

    std::vector<std::vector<double>> v(nr, std::vector<double>(d.n + 1));
    for (std::size_t i = 0; i < nr; ++i)
        for (std::size_t k = 0; k <= d.n; ++k)
            v[i][k] = sol[static_cast<Eigen::Index>(d.idx(i, k))];
    return v;
}

} // namespace

GridSolution solve_grid(const ModelParams& params, const OracleOptions& opt) {
    validate(params);
    if (params.n_regimes() != 2)
        throw Error(ErrorCode::RegimeCountUnsupported, "grid oracle implements the 2-regime chain");
    if (opt.n_cells < 8)
        throw Error(ErrorCode::InvalidInput, "grid oracle needs at least 8 cells");

    const double x_max = (opt.x_max > 0.0)
                             ? opt.x_max
                             : 3.0 * (params.mu_max() + params.rate_cap) / params.delta +
                                   10.0 * params.fixed_cost;
    Discretization d{opt.n_cells, x_max / static_cast<double>(opt.n_cells), params};
    const std::size_t nr = params.n_regimes();

    GridSolution out;
    out.h = d.h;
    out.x.resize(d.n + 1);
    for (std::size_t k = 0; k <= d.n; ++k) out.x[k] = d.h * static_cast<double>(k);

    // Start from "pay the full rate everywhere, never impulse".
    out.policy.assign(nr, std::vector<GridControl>(d.n + 1, {false, params.rate_cap, 0}));

    std::vector<std::vector<double>> v_prev;
    for (int it = 1; it <= opt.max_policy_iter; ++it) {
        out.iterations = it;
        auto v = solve_policy(d, out.policy);

        double vdiff = 0.0, vscale = 1.0;
        if (!v_prev.empty()) {
            for (std::size_t i = 0; i < nr; ++i)
                for (std::size_t k = 0; k <= d.n; ++k) {
                    vdiff = std::max(vdiff, std::abs(v[i][k] - v_prev[i][k]));
                    vscale = std::max(vscale, std::abs(v[i][k]));
                }
        }

        bool changed = false;
        for (std::size_t i = 0; i < nr; ++i) {
            const auto& reg = params.regimes[i];
            const std::size_t other = 1 - i;
            // Running maximum of v - x gives the best impulse target in O(1).
            double best_m = -std::numeric_limits<double>::infinity();
            std::size_t best_j = 0;
            for (std::size_t k = 1; k <= d.n; ++k) {
                const double m_prev = v[i][k - 1] - out.x[k - 1];
                if (m_prev > best_m) {
                    best_m = m_prev;
                    best_j = k - 1;
                }
                const double val_imp = out.x[k] - params.fixed_cost + best_m;

                // Local Gauss-Seidel candidate per rate choice.
                double best_cont = -std::numeric_limits<double>::infinity();
                double best_rate = 0.0;
                for (double u : {0.0, params.rate_cap}) {
                    const Stencil s = stencil(reg, u, d.h);
                    const double denom = s.dn + s.up + params.delta + reg.lambda_out;
                    double cand;
                    if (k < d.n) {
                        cand = (s.up * v[i][k + 1] + s.dn * v[i][k - 1] +
                                reg.lambda_out * v[other][k] + u) /
                               denom;
                    } else {
                        cand = ((s.dn + s.up) * v[i][k - 1] + s.up * 2.0 * d.h +
                                reg.lambda_out * v[other][k] + u) /
                               denom;
                    }
                    if (cand > best_cont) {
                        best_cont = cand;
                        best_rate = u;
                    }
                }

                GridControl next;
                const double scale = std::max(1.0, std::abs(best_cont));
                if (val_imp > best_cont + 1e-12 * scale) {
                    next = {true, 0.0, best_j};
                } else {
                    next = {false, best_rate, 0};
                }
                GridControl& cur = out.policy[i][k];
                if (next.impulse != cur.impulse || next.rate != cur.rate ||
                    (next.impulse && next.target != cur.target)) {
                    cur = next;
                    changed = true;
                }
            }
        }

        if (!changed || (!v_prev.empty() && vdiff <= opt.tol * vscale)) {
            out.v = std::move(v);
            return out;
        }
        v_prev = v;
        out.v = std::move(v);
    }
    throw Error(ErrorCode::NotConverged, "policy iteration did not stabilize");
}

GridBoundaries extract_boundaries(const GridSolution& sol) {
    GridBoundaries gb;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < sol.policy.size(); ++i) {
        double B = nan, b = nan, rs = nan;
        for (std::size_t k = 1; k < sol.policy[i].size(); ++k) {
            const GridControl& c = sol.policy[i][k];
            if (c.impulse) {
                B = sol.x[k];
                b = sol.x[c.target];
                break;
            }
            if (std::isnan(rs) && c.rate > 0.0) rs = sol.x[k];
        }
        gb.b.push_back(b);
        gb.B.push_back(B);
        gb.rate_switch.push_back(rs);
    }
    return gb;
}

} // namespace qdl
