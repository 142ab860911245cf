#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qdl/charpoly.hpp"
#include "qdl/model.hpp"
#include "qdl/valuefn.hpp"

namespace qdl {

/// Relative position of the four thresholds b_i < B_i across the two regimes.
enum class OrderingTag {
    Nested,             ///< b1 <= b2 < B1 <= B2
    Interleaved,        ///< b1 < B1 < b2 < B2
    NestedSwapped,      ///< mirror of Nested under regime relabeling
    InterleavedSwapped, ///< mirror of Interleaved under regime relabeling
};

/// Boundary behaviour of v' at zero.
enum class CaseTag {
    BothSlopesAbove1, ///< v'(0,i) > 1 for both regimes
    OneSlopeAt1,      ///< v'(0,1) = 1 and v'(0,2) > 1 (after any relabeling)
    BothSlopesAt1,    ///< v'(0,i) = 1 for both regimes (Nested ordering only)
};

const char* to_string(OrderingTag t);
const char* to_string(CaseTag t);

struct Thresholds {
    std::array<double, 2> b{0.0, 0.0};
    std::array<double, 2> B{0.0, 0.0};
};

struct SolveOptions {
    double tol_root = 1e-10;
    double tol_fit = 1e-8;
    double gap_min = 1e-6;
    double cond_max = 1e12;
    double tol_qvi = 1e-6;
    int max_outer_iter = 120;
    std::size_t qvi_points = 2001;
    std::vector<Thresholds> hints; ///< extra initial guesses for the outer solve
};

/// Whether a regime is governed by its ODE or sits in its impulse region.
enum class RegimeMode { Diffusive, Affine };

/// One interval of the piecewise solution together with its characteristic
/// roots, particular solution and the slice of unknown coefficients.
struct RegionSpec {
    double lo = 0.0;
    double hi = 0.0; ///< +inf for the tail
    RegionKind kind = RegionKind::NoPayNoPay;
    int active = -1; ///< diffusive regime for single-regime kinds, -1 otherwise
    RootSet roots;   ///< empty for the tail
    std::array<double, 2> particular_const{0.0, 0.0}; ///< coupled-region constants
    int coeff_offset = 0;
    int n_coeffs = 0;

    RegimeMode mode(std::size_t regime) const;
};

struct SystemLayout {
    OrderingTag ordering = OrderingTag::Nested;
    CaseTag case_tag = CaseTag::BothSlopesAbove1;
    Thresholds thresholds;
    std::vector<RegionSpec> regions;
    int n_unknowns = 0;              ///< coefficients plus the two tail intercepts
    std::array<int, 2> q_index{0, 0}; ///< unknown index of each tail intercept
    int n_free_thresholds = 0;
    int full_unknown_count = 0; ///< coefficient count before linkage elimination + free thresholds
};

/// Constant (coupled regions) or affine (single-regime regions) particular
/// solution, re-derived from the ansatz rather than transcribed.
/// Coupled regions: returns (F1, F2) solving the 2x2 constant-ansatz system.
std::array<double, 2> particular_constants(const ModelParams& params, RegionKind kind);

/// Region table, characteristic roots and unknown-coefficient layout for one
/// (ordering, case) candidate at fixed thresholds. Only the unswapped
/// orderings are assembled directly; classify_and_solve handles the mirrors.
SystemLayout assemble_segments(const ModelParams& params, OrderingTag ordering,
                               CaseTag case_tag, const Thresholds& thr,
                               const SolveOptions& opt = {});

struct InnerSolution {
    Eigen::VectorXd coeffs;        ///< solution of the linear smooth-fit block
    std::vector<double> residual;  ///< leftover slope-one conditions, one per free threshold
    double cond = 0.0;             ///< condition number after column equilibration
    double linear_residual = 0.0;  ///< max |A w - rhs| of the solved block
};

/// Solves the equations linear in the coefficients at fixed thresholds and
/// returns the remaining v' = 1 conditions as the outer residual vector.
InnerSolution inner_linear_solve(const ModelParams& params, const SystemLayout& layout,
                                 const SolveOptions& opt = {});

/// Damped Newton root-find on the outer residual over the free thresholds,
/// with box constraints keeping the ordering strict. Throws NoRoot.
Thresholds outer_threshold_solve(const ModelParams& params, OrderingTag ordering,
                                 CaseTag case_tag, const SolveOptions& opt = {});

/// Piecewise value function assembled from a solved system.
ValueFunction build_value_function(const SystemLayout& layout, const Eigen::VectorXd& coeffs);

struct SideConditions {
    double slope0_regime1 = 0.0; ///< v'(0,1)
    double slope0_regime2 = 0.0; ///< v'(0,2)
    double weighted_sum = 0.0;   ///< sum_j A_j phi_1(alpha_j) alpha_j of the first region
    std::vector<double> slacks;  ///< each must be >= -tol_fit
    bool boundary = false;       ///< a strict condition holds only within tol (prefer the boundary case)
    bool pass = false;
};

SideConditions side_conditions(const ModelParams& params, const SystemLayout& layout,
                               const ValueFunction& v, const SolveOptions& opt = {});

struct SolutionBundle {
    ModelParams params;
    OrderingTag ordering = OrderingTag::Nested;
    CaseTag case_tag = CaseTag::BothSlopesAbove1;
    std::array<double, 2> b{0.0, 0.0};
    std::array<double, 2> B{0.0, 0.0};
    ValueFunction value;
    DividendPolicy policy;
    double smooth_fit_residual_max = 0.0;
    std::vector<double> side_slacks;
    QviReport qvi;
    BoundsReport bounds;
    std::vector<std::string> candidate_log; ///< every (ordering, case) attempted, with outcome
};

/// Enumerates (ordering, case) candidates in a fixed order, solves each, and
/// returns the first whose smooth-fit residuals, side conditions, threshold
/// ordering and full variational-inequality check all pass.
/// Throws NoValidCase when no candidate survives.
SolutionBundle classify_and_solve(const ModelParams& params, const SolveOptions& opt = {});

/// Decoupled one-regime problem (regime switching ignored), used for the
/// symmetric fast path and as the outer solver's initial anchor.
struct SingleRegimeSolution {
    double b = 0.0;
    double B = 0.0;
    bool boundary_case = false; ///< b pinned at 0
    std::vector<ExpSegment> segments;
};

SingleRegimeSolution solve_single_regime(const RegimeParams& regime, double delta, double rate_cap,
                                         double fixed_cost, const SolveOptions& opt = {});

} // namespace qdl
