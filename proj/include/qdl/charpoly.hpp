#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "qdl/model.hpp"

namespace qdl {

/// Which regimes have the dividend rate L folded into the drift inside a
/// solution region. The effective drift of regime i is mu_i - L when that
/// regime is paying, mu_i otherwise.
enum class RegionKind {
    NoPayNoPay,        ///< coupled, neither regime pays
    PayNoPay,          ///< coupled, regime 1 pays
    PayPay,            ///< coupled, both regimes pay
    SingleRegimeNoPay, ///< one diffusive regime (the other is in its impulse region), no pay
    SingleRegimePay,   ///< one diffusive regime, paying at rate L
};

bool is_coupled(RegionKind kind);

/// Effective drift of regime `i` (0-based) in a region of the given kind.
double effective_drift(const ModelParams& params, RegionKind kind, std::size_t i);

/// The characteristic quadratic -sigma^2 z^2 / 2 - mubar z + (lambda + delta).
double phi(const RegimeParams& regime, double effective_drift, double delta, double z);

/// Sorted real roots of a regional characteristic equation.
///
/// Coupled regions: the four roots z1 < z2 < 0 < z3 < z4 of
/// phi_1(z) phi_2(z) = lambda_1 lambda_2, plus per-root linkage ratios
/// tying the regime-2 coefficient to the regime-1 coefficient.
/// Single-regime regions: the two roots (one negative, one positive) of
/// sigma^2 z^2 / 2 + mubar z - (lambda + delta) = 0.
struct RootSet {
    std::vector<double> roots;       ///< ascending
    std::vector<double> link_ratios; ///< coupled regions only, one per root
};

struct RootOptions {
    double tol_root = 1e-10; ///< relative residual tolerance after polishing
};

/// Monomial coefficients (constant first) of phi_1(z) phi_2(z) - lambda_1 lambda_2.
std::array<double, 5> quartic_coefficients(const ModelParams& params, RegionKind kind);

/// Roots of the coupled characteristic equation for a two-regime region.
/// Throws RootStructureViolated if the sign pattern or residual check fails.
RootSet quartic_roots(const ModelParams& params, RegionKind kind, const RootOptions& opt = {});

/// Roots of the single-regime characteristic equation for regime `i` (0-based).
RootSet single_regime_roots(const ModelParams& params, std::size_t i, bool pay,
                            const RootOptions& opt = {});

} // namespace qdl
