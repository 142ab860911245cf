#pragma once

#include <cstddef>
#include <vector>

#include "qdl/model.hpp"

namespace qdl {

struct OracleOptions {
    double x_max = 0.0;        ///< 0: choose automatically from the value bound
    std::size_t n_cells = 4000;
    int max_policy_iter = 200;
    double tol = 1e-10;        ///< policy-iteration value tolerance (relative)
};

/// One node's control in the discrete policy.
struct GridControl {
    bool impulse = false;
    double rate = 0.0;       ///< continuous rate when not impulsing
    std::size_t target = 0;  ///< impulse target node index
};

struct GridSolution {
    std::vector<double> x;                        ///< nodes, x[k] = k h
    std::vector<std::vector<double>> v;           ///< per regime, per node
    std::vector<std::vector<GridControl>> policy; ///< per regime, per node
    int iterations = 0;
    double h = 0.0;
};

/// Monotone upwind finite-difference discretization of the variational
/// inequality, solved by policy iteration (Howard's algorithm) with a direct
/// sparse solve per iteration. Throws NotConverged when the policy does not
/// stabilize within max_policy_iter.
GridSolution solve_grid(const ModelParams& params, const OracleOptions& opt = {});

struct GridBoundaries {
    std::vector<double> b; ///< impulse targets (NaN if the regime never impulses)
    std::vector<double> B; ///< first impulse trigger (NaN likewise)
    std::vector<double> rate_switch; ///< first node paying the full rate cap
};

/// Reads the threshold structure off a converged grid policy.
GridBoundaries extract_boundaries(const GridSolution& sol);

} // namespace qdl
