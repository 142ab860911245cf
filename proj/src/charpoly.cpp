#include "qdl/charpoly.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>

namespace qdl {

bool is_coupled(RegionKind kind) {
    return kind == RegionKind::NoPayNoPay || kind == RegionKind::PayNoPay ||
           kind == RegionKind::PayPay;
}

double effective_drift(const ModelParams& params, RegionKind kind, std::size_t i) {
    const double mu = params.regimes.at(i).mu;
    const double L = params.rate_cap;
    switch (kind) {
    case RegionKind::NoPayNoPay:        return mu;
    case RegionKind::PayNoPay:          return i == 0 ? mu - L : mu;
    case RegionKind::PayPay:            return mu - L;
    case RegionKind::SingleRegimeNoPay: return mu;
    case RegionKind::SingleRegimePay:   return mu - L;
    }
    return mu;
}

double phi(const RegimeParams& regime, double effective_drift, double delta, double z) {
    return -0.5 * regime.sigma * regime.sigma * z * z - effective_drift * z +
           (regime.lambda_out + delta);
}

std::array<double, 5> quartic_coefficients(const ModelParams& params, RegionKind kind) {
    // phi_i(z) = a_i z^2 + b_i z + c_i
    const double a1 = -0.5 * params.regimes[0].sigma * params.regimes[0].sigma;
    const double a2 = -0.5 * params.regimes[1].sigma * params.regimes[1].sigma;
    const double b1 = -effective_drift(params, kind, 0);
    const double b2 = -effective_drift(params, kind, 1);
    const double c1 = params.regimes[0].lambda_out + params.delta;
    const double c2 = params.regimes[1].lambda_out + params.delta;
    const double l1l2 = params.regimes[0].lambda_out * params.regimes[1].lambda_out;
    return {c1 * c2 - l1l2,
            b1 * c2 + b2 * c1,
            a1 * c2 + a2 * c1 + b1 * b2,
            a1 * b2 + a2 * b1,
            a1 * a2};
}

namespace {

double coupled_residual(const ModelParams& p, RegionKind kind, double z) {
    const double f1 = phi(p.regimes[0], effective_drift(p, kind, 0), p.delta, z);
    const double f2 = phi(p.regimes[1], effective_drift(p, kind, 1), p.delta, z);
    return f1 * f2 - p.regimes[0].lambda_out * p.regimes[1].lambda_out;
}

double coupled_residual_deriv(const ModelParams& p, RegionKind kind, double z) {
    const auto& r1 = p.regimes[0];
    const auto& r2 = p.regimes[1];
    const double m1 = effective_drift(p, kind, 0);
    const double m2 = effective_drift(p, kind, 1);
    const double f1 = phi(r1, m1, p.delta, z);
    const double f2 = phi(r2, m2, p.delta, z);
    const double d1 = -r1.sigma * r1.sigma * z - m1;
    const double d2 = -r2.sigma * r2.sigma * z - m2;
    return d1 * f2 + f1 * d2;
}

} // namespace

RootSet quartic_roots(const ModelParams& params, RegionKind kind, const RootOptions& opt) {
    if (!is_coupled(kind))
        throw Error(ErrorCode::InvalidInput, "quartic_roots needs a coupled region kind");
    if (params.regimes.size() != 2)
        throw Error(ErrorCode::RegimeCountUnsupported, "coupled characteristic equation needs 2 regimes");

    const auto c = quartic_coefficients(params, kind);
    double scale = 0.0;
    for (double v : c) scale = std::max(scale, std::abs(v));

    // Companion matrix of the monic quartic.
    Eigen::Matrix4d comp = Eigen::Matrix4d::Zero();
    for (int k = 0; k < 4; ++k) comp(k, 3) = -c[k] / c[4];
    comp(1, 0) = comp(2, 1) = comp(3, 2) = 1.0;
    Eigen::EigenSolver<Eigen::Matrix4d> es(comp);

    std::vector<double> roots;
    for (int k = 0; k < 4; ++k) {
        const std::complex<double> z = es.eigenvalues()[k];
        if (std::abs(z.imag()) > 1e-7 * std::max(1.0, std::abs(z)))
            throw Error(ErrorCode::RootStructureViolated,
                        "complex characteristic root encountered");
        roots.push_back(z.real());
    }
    std::sort(roots.begin(), roots.end());

    // Damped Newton polish on the factored form phi1 phi2 - l1 l2.
    for (double& z : roots) {
        for (int it = 0; it < 12; ++it) {
            const double f = coupled_residual(params, kind, z);
            const double df = coupled_residual_deriv(params, kind, z);
            if (df == 0.0) break;
            double step = f / df;
            const double cap = 0.1 * std::max(1.0, std::abs(z));
            step = std::clamp(step, -cap, cap);
            z -= step;
            if (std::abs(step) < 1e-15 * std::max(1.0, std::abs(z))) break;
        }
    }
    std::sort(roots.begin(), roots.end());

    const double root_scale = std::max(1.0, std::abs(roots.front()) + std::abs(roots.back()));
    if (!(roots[0] < roots[1] && roots[1] < 0.0 && 0.0 < roots[2] && roots[2] < roots[3]))
        throw Error(ErrorCode::RootStructureViolated,
                    "root sign pattern z1<z2<0<z3<z4 failed");
    for (int k = 0; k < 3; ++k)
        if (roots[k + 1] - roots[k] < 1e-8 * root_scale)
            throw Error(ErrorCode::RootStructureViolated,
                        "near-coincident characteristic roots; perturb the parameters");

    const double l1 = params.regimes[0].lambda_out;
    const double l2 = params.regimes[1].lambda_out;
    RootSet rs;
    rs.roots = roots;
    for (double z : roots) {
        const double res = coupled_residual(params, kind, z);
        // Evaluation noise grows with the largest monomial at z, not with the
        // raw coefficient magnitudes; measure the residual against that scale.
        double local_scale = std::max(1.0, scale);
        double zp = 1.0;
        for (double cj : c) {
            local_scale = std::max(local_scale, std::abs(cj * zp));
            zp *= z;
        }
        if (std::abs(res) > opt.tol_root * local_scale) {
            std::ostringstream msg;
            msg << "root residual " << res << " exceeds tolerance";
            throw Error(ErrorCode::RootStructureViolated, msg.str());
        }
        const double f1 = phi(params.regimes[0], effective_drift(params, kind, 0), params.delta, z);
        const double f2 = phi(params.regimes[1], effective_drift(params, kind, 1), params.delta, z);
        const double ratio_a = f1 / l1;
        const double ratio_b = l2 / f2;
        // The two formulas differ by res / (l1 f2) exactly, so the agreement
        // tolerance must carry that conditioning factor.
        const double ratio_tol = opt.tol_root * local_scale / (l1 * std::abs(f2)) +
                                 1e-9 * (1.0 + std::abs(ratio_a));
        if (std::abs(ratio_a - ratio_b) > ratio_tol)
            throw Error(ErrorCode::RootStructureViolated, "linkage ratio formulas disagree");
        rs.link_ratios.push_back(ratio_a);
    }
    return rs;
}

RootSet single_regime_roots(const ModelParams& params, std::size_t i, bool pay,
                            const RootOptions& opt) {
    const auto& r = params.regimes.at(i);
    const double mubar = r.mu - (pay ? params.rate_cap : 0.0);
    // sigma^2 z^2 / 2 + mubar z - (lambda + delta) = 0
    const double a = 0.5 * r.sigma * r.sigma;
    const double b = mubar;
    const double cc = -(r.lambda_out + params.delta);
    const double disc = b * b - 4.0 * a * cc;
    if (!(disc > 0.0))
        throw Error(ErrorCode::RootStructureViolated, "single-regime discriminant not positive");
    const double sq = std::sqrt(disc);
    // Numerically stable quadratic formula.
    const double q = -0.5 * (b + std::copysign(sq, b));
    double z1 = q / a;
    double z2 = cc / q;
    if (z1 > z2) std::swap(z1, z2);
    if (!(z1 < 0.0 && z2 > 0.0))
        throw Error(ErrorCode::RootStructureViolated, "single-regime roots must straddle zero");
    const double scale = std::max({1.0, std::abs(a), std::abs(b), std::abs(cc)});
    for (double z : {z1, z2})
        if (std::abs(a * z * z + b * z + cc) > opt.tol_root * scale * std::max(1.0, z * z))
            throw Error(ErrorCode::RootStructureViolated, "single-regime root residual too large");
    RootSet rs;
    rs.roots = {z1, z2};
    return rs;
}

} // namespace qdl
