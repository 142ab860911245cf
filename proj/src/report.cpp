#include "qdl/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace qdl {

std::string version_string() { return "qdl 0.1.0"; }

std::string format17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

nlohmann::json to_json(const ModelParams& params) {
    nlohmann::json regimes = nlohmann::json::array();
    for (const auto& r : params.regimes)
        regimes.push_back({{"mu", r.mu}, {"sigma", r.sigma}, {"lambda", r.lambda_out}});
    return {{"regimes", regimes},
            {"delta", params.delta},
            {"rate_cap", params.rate_cap},
            {"fixed_cost", params.fixed_cost}};
}

ModelParams params_from_json(const nlohmann::json& j) {
    ModelParams p;
    try {
        for (const auto& r : j.at("regimes")) {
            RegimeParams reg;
            reg.mu = r.at("mu").get<double>();
            reg.sigma = r.at("sigma").get<double>();
            reg.lambda_out = r.at("lambda").get<double>();
            p.regimes.push_back(reg);
        }
        p.delta = j.at("delta").get<double>();
        p.rate_cap = j.at("rate_cap").get<double>();
        p.fixed_cost = j.at("fixed_cost").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidInput, std::string("model config: ") + e.what());
    }
    return p;
}

SolveOptions solve_options_from_json(const nlohmann::json& j) {
    SolveOptions o;
    try {
        o.tol_root = j.value("tol_root", o.tol_root);
        o.tol_fit = j.value("tol_fit", o.tol_fit);
        o.gap_min = j.value("gap_min", o.gap_min);
        o.cond_max = j.value("cond_max", o.cond_max);
        o.tol_qvi = j.value("tol_qvi", o.tol_qvi);
        o.max_outer_iter = j.value("max_outer_iter", o.max_outer_iter);
        o.qvi_points = j.value("qvi_points", o.qvi_points);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidInput, std::string("solve config: ") + e.what());
    }
    return o;
}

SimConfig sim_config_from_json(const nlohmann::json& j) {
    SimConfig c;
    try {
        c.x0 = j.value("x0", c.x0);
        c.regime0 = j.value("regime0", c.regime0);
        c.dt = j.value("dt", c.dt);
        c.horizon = j.value("horizon", c.horizon);
        c.n_paths = j.value("n_paths", c.n_paths);
        c.seed = j.value("seed", c.seed);
        c.antithetic = j.value("antithetic", c.antithetic);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidInput, std::string("sim config: ") + e.what());
    }
    return c;
}

OracleOptions oracle_options_from_json(const nlohmann::json& j) {
    OracleOptions o;
    try {
        o.x_max = j.value("x_max", o.x_max);
        o.n_cells = j.value("n_cells", o.n_cells);
        o.max_policy_iter = j.value("max_policy_iter", o.max_policy_iter);
        o.tol = j.value("tol", o.tol);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidInput, std::string("oracle config: ") + e.what());
    }
    return o;
}

nlohmann::json to_json(const ValueFunction& v) {
    nlohmann::json regimes = nlohmann::json::array();
    for (std::size_t i = 0; i < v.n_regimes(); ++i) {
        nlohmann::json segs = nlohmann::json::array();
        for (const auto& s : v.segments(i)) {
            nlohmann::json terms = nlohmann::json::array();
            for (const auto& t : s.terms)
                terms.push_back({{"coeff", t.coeff}, {"exponent", t.exponent}});
            segs.push_back({{"lo", s.lo},
                            {"hi", std::isfinite(s.hi) ? nlohmann::json(s.hi) : nlohmann::json()},
                            {"shift", s.shift},
                            {"terms", terms},
                            {"slope", s.slope},
                            {"intercept", s.intercept}});
        }
        regimes.push_back(segs);
    }
    return {{"regimes", regimes}};
}

nlohmann::json to_json(const QviReport& r) {
    return {{"x_max", r.grid.x_max},
            {"n_points", r.grid.n_points},
            {"generator_max", r.generator_max},
            {"generator_abs_max_cont", r.generator_abs_max_cont},
            {"intervention_min", r.intervention_min},
            {"intervention_gap_max_tail", r.intervention_gap_max_tail},
            {"complementarity_max", r.complementarity_max},
            {"scale", r.scale},
            {"tol", r.tol},
            {"pass", r.pass}};
}

nlohmann::json to_json(const BoundsReport& r) {
    return {{"upper_slack_min", r.upper_slack_min},
            {"growth_slack_min", r.growth_slack_min},
            {"pass", r.pass}};
}

nlohmann::json to_json(const DividendPolicy& p) {
    nlohmann::json bands = nlohmann::json::array();
    for (const auto& b : p.bands)
        bands.push_back({{"b", b.lower_threshold},
                         {"B", b.upper_threshold},
                         {"rate_low", b.rate_low},
                         {"rate_mid", b.rate_mid}});
    return {{"bands", bands}};
}

nlohmann::json to_json(const SolutionBundle& s) {
    return {{"version", version_string()},
            {"model", to_json(s.params)},
            {"ordering", to_string(s.ordering)},
            {"case", to_string(s.case_tag)},
            {"b", s.b},
            {"B", s.B},
            {"policy", to_json(s.policy)},
            {"value", to_json(s.value)},
            {"smooth_fit_residual_max", s.smooth_fit_residual_max},
            {"side_slacks", s.side_slacks},
            {"qvi", to_json(s.qvi)},
            {"bounds", to_json(s.bounds)},
            {"candidate_log", s.candidate_log}};
}

nlohmann::json to_json(const SimEstimate& e) {
    return {{"mean", e.mean},
            {"std_error", e.std_error},
            {"n_samples", e.n_samples},
            {"ruin_fraction", e.ruin_fraction},
            {"mean_impulses", e.mean_impulses}};
}

nlohmann::json to_json(const GridBoundaries& g) {
    auto arr = [](const std::vector<double>& v) {
        nlohmann::json a = nlohmann::json::array();
        for (double x : v)
            a.push_back(std::isnan(x) ? nlohmann::json() : nlohmann::json(x));
        return a;
    };
    return {{"b", arr(g.b)}, {"B", arr(g.B)}, {"rate_switch", arr(g.rate_switch)}};
}

std::string value_csv(const ValueFunction& v, double x_max, std::size_t n_points) {
    std::ostringstream out;
    out << "x";
    for (std::size_t i = 0; i < v.n_regimes(); ++i) out << ",v" << (i + 1);
    for (std::size_t i = 0; i < v.n_regimes(); ++i) out << ",dv" << (i + 1);
    out << "\n";
    const std::size_t n = std::max<std::size_t>(n_points, 2);
    for (std::size_t k = 0; k < n; ++k) {
        const double x = x_max * static_cast<double>(k) / static_cast<double>(n - 1);
        out << format17(x);
        for (std::size_t i = 0; i < v.n_regimes(); ++i) out << "," << format17(v.eval(x, i));
        for (std::size_t i = 0; i < v.n_regimes(); ++i) out << "," << format17(v.eval_deriv(x, i));
        out << "\n";
    }
    return out.str();
}

std::string grid_csv(const GridSolution& sol) {
    std::ostringstream out;
    out << "x";
    for (std::size_t i = 0; i < sol.v.size(); ++i)
        out << ",v" << (i + 1) << ",impulse" << (i + 1) << ",rate" << (i + 1);
    out << "\n";
    for (std::size_t k = 0; k < sol.x.size(); ++k) {
        out << format17(sol.x[k]);
        for (std::size_t i = 0; i < sol.v.size(); ++i) {
            const GridControl& c = sol.policy[i][k];
            out << "," << format17(sol.v[i][k]) << "," << (c.impulse ? 1 : 0) << ","
                << format17(c.rate);
        }
        out << "\n";
    }
    return out.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw Error(ErrorCode::InvalidInput, "cannot open output file " + path);
    f << content;
    if (!f)
        throw Error(ErrorCode::InvalidInput, "failed writing " + path);
}

} // namespace qdl
