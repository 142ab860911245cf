#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "qdl/oracle.hpp"
#include "qdl/report.hpp"
#include "qdl/simulate.hpp"
#include "qdl/smoothfit.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitNoAnalyticCase = 2;
constexpr int kExitMismatch = 3;
constexpr int kExitOracleDiverged = 4;

int exit_code_for(const qdl::Error& e) {
    switch (e.code()) {
    case qdl::ErrorCode::NonPositiveParameter:
    case qdl::ErrorCode::AssumptionHViolated:
    case qdl::ErrorCode::RegimeCountUnsupported:
    case qdl::ErrorCode::NegativeSurplus:
    case qdl::ErrorCode::InvalidStart:
    case qdl::ErrorCode::InvalidInput:
        return kExitInput;
    case qdl::ErrorCode::NotConverged:
        return kExitOracleDiverged;
    default:
        return kExitNoAnalyticCase;
    }
}

nlohmann::json load_config(const std::string& path, const std::vector<std::string>& sets) {
    nlohmann::json cfg;
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f)
            throw qdl::Error(qdl::ErrorCode::InvalidInput, "cannot open config " + path);
        try {
            f >> cfg;
        } catch (const nlohmann::json::exception& e) {
            throw qdl::Error(qdl::ErrorCode::InvalidInput,
                             std::string("config parse error: ") + e.what());
        }
    }
    for (const std::string& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw qdl::Error(qdl::ErrorCode::InvalidInput, "--set expects key=value, got " + kv);
        const std::string key = kv.substr(0, eq);
        const std::string raw = kv.substr(eq + 1);
        nlohmann::json val;
        try {
            val = nlohmann::json::parse(raw);
        } catch (const nlohmann::json::exception&) {
            val = raw; // fall back to a plain string
        }
        nlohmann::json* node = &cfg;
        std::size_t pos = 0;
        while (true) {
            const auto dot = key.find('.', pos);
            const std::string part = key.substr(pos, dot - pos);
            if (part.empty())
                throw qdl::Error(qdl::ErrorCode::InvalidInput, "--set key has an empty segment");
            if (dot == std::string::npos) {
                (*node)[part] = val;
                break;
            }
            node = &(*node)[part];
            pos = dot + 1;
        }
    }
    return cfg;
}

void emit(const std::string& out_dir, const std::string& name, const std::string& content) {
    if (out_dir.empty()) {
        std::cout << content << std::endl;
        return;
    }
    std::filesystem::create_directories(out_dir);
    qdl::write_text_file((std::filesystem::path(out_dir) / name).string(), content);
}

nlohmann::json report_header(const nlohmann::json& cfg) {
    return {{"version", qdl::version_string()}, {"config", cfg}};
}

double solved_x_span(const qdl::SolutionBundle& s) { return 1.5 * std::max(s.B[0], s.B[1]); }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hybrid dividend workbench: analytic two-regime solver, grid oracle, simulator"};
    app.require_subcommand(1);
    app.fallthrough(true);

    std::string config_path;
    std::string out_dir;
    std::vector<std::string> sets;
    double tol_flag = -1.0;
    long long seed_flag = -1;

    app.add_option("--config", config_path, "JSON configuration file");
    app.add_option("--out", out_dir, "output directory (stdout if omitted)");
    app.add_option("--set", sets, "override a config entry, e.g. --set sim.n_paths=5000");
    app.add_option("--tol", tol_flag, "override the gate tolerance of the subcommand");
    app.add_option("--seed", seed_flag, "override sim.seed");

    auto* cmd_solve = app.add_subcommand("solve", "solve the smooth-fit system and classify the case");
    auto* cmd_verify = app.add_subcommand("verify", "solve, then re-check the variational inequality");
    auto* cmd_sim = app.add_subcommand("simulate", "Monte Carlo the solved policy");
    auto* cmd_oracle = app.add_subcommand("oracle", "finite-difference reference solve");
    auto* cmd_compare = app.add_subcommand("compare", "analytic vs grid-oracle agreement");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e); // prints help or the parse error
        return code == 0 ? kExitOk : kExitInput;
    }

    try {
        const nlohmann::json cfg = load_config(config_path, sets);
        if (!cfg.contains("model"))
            throw qdl::Error(qdl::ErrorCode::InvalidInput, "config needs a \"model\" section");
        const qdl::ModelParams params = qdl::params_from_json(cfg.at("model"));
        qdl::SolveOptions sopt = qdl::solve_options_from_json(cfg.value("solve", nlohmann::json::object()));

        if (cmd_solve->parsed() || cmd_verify->parsed()) {
            if (cmd_verify->parsed() && tol_flag > 0.0) sopt.tol_qvi = tol_flag;
            const qdl::SolutionBundle sol = qdl::classify_and_solve(params, sopt);
            nlohmann::json rep = report_header(cfg);
            rep["solution"] = qdl::to_json(sol);
            emit(out_dir, cmd_verify->parsed() ? "verify.json" : "solve.json", rep.dump(2));
            if (!out_dir.empty())
                emit(out_dir, "value.csv", qdl::value_csv(sol.value, solved_x_span(sol), 2001));
            std::cerr << qdl::to_string(sol.ordering) << "/" << qdl::to_string(sol.case_tag)
                      << "  b=[" << sol.b[0] << "," << sol.b[1] << "]  B=[" << sol.B[0] << ","
                      << sol.B[1] << "]\n";
            if (cmd_verify->parsed() && !(sol.qvi.pass && sol.bounds.pass)) return kExitMismatch;
            return kExitOk;
        }

        if (cmd_sim->parsed()) {
            qdl::SimConfig sim = qdl::sim_config_from_json(cfg.value("sim", nlohmann::json::object()));
            if (seed_flag >= 0) sim.seed = static_cast<std::uint64_t>(seed_flag);
            const qdl::SolutionBundle sol = qdl::classify_and_solve(params, sopt);
            const qdl::SimEstimate est = qdl::estimate_value(params, sol.policy, sim);
            const double analytic = sol.value.eval(sim.x0, sim.regime0);
            nlohmann::json rep = report_header(cfg);
            rep["solution"] = {{"ordering", qdl::to_string(sol.ordering)},
                               {"case", qdl::to_string(sol.case_tag)},
                               {"b", sol.b},
                               {"B", sol.B}};
            rep["simulation"] = qdl::to_json(est);
            rep["analytic_value"] = analytic;
            rep["z_score"] =
                est.std_error > 0.0 ? (est.mean - analytic) / est.std_error : 0.0;
            emit(out_dir, "simulate.json", rep.dump(2));
            return kExitOk;
        }

        if (cmd_oracle->parsed()) {
            const qdl::OracleOptions oopt =
                qdl::oracle_options_from_json(cfg.value("oracle", nlohmann::json::object()));
            const qdl::GridSolution grid = qdl::solve_grid(params, oopt);
            nlohmann::json rep = report_header(cfg);
            rep["boundaries"] = qdl::to_json(qdl::extract_boundaries(grid));
            rep["iterations"] = grid.iterations;
            rep["h"] = grid.h;
            emit(out_dir, "oracle.json", rep.dump(2));
            if (!out_dir.empty()) emit(out_dir, "grid.csv", qdl::grid_csv(grid));
            return kExitOk;
        }

        if (cmd_compare->parsed()) {
            const qdl::SolutionBundle sol = qdl::classify_and_solve(params, sopt);
            qdl::OracleOptions oopt =
                qdl::oracle_options_from_json(cfg.value("oracle", nlohmann::json::object()));
            if (oopt.x_max <= 0.0)
                oopt.x_max = solved_x_span(sol) +
                             3.0 * (params.mu_max() + params.rate_cap) / params.delta;
            const qdl::GridSolution grid = qdl::solve_grid(params, oopt);
            const qdl::GridBoundaries gb = qdl::extract_boundaries(grid);

            double sup_diff = 0.0, scale = 1.0;
            const double span = solved_x_span(sol);
            for (std::size_t i = 0; i < 2; ++i)
                for (std::size_t k = 0; k < grid.x.size(); ++k) {
                    if (grid.x[k] > span) break;
                    const double a = sol.value.eval(grid.x[k], i);
                    sup_diff = std::max(sup_diff, std::abs(a - grid.v[i][k]));
                    scale = std::max(scale, std::abs(a));
                }
            const double tol = (tol_flag > 0.0) ? tol_flag : 0.02;
            const bool pass = sup_diff <= tol * scale;

            nlohmann::json rep = report_header(cfg);
            rep["solution"] = {{"ordering", qdl::to_string(sol.ordering)},
                               {"case", qdl::to_string(sol.case_tag)},
                               {"b", sol.b},
                               {"B", sol.B}};
            rep["oracle_boundaries"] = qdl::to_json(gb);
            rep["h"] = grid.h;
            rep["value_sup_diff"] = sup_diff;
            rep["scale"] = scale;
            rep["tol"] = tol;
            rep["pass"] = pass;
            emit(out_dir, "compare.json", rep.dump(2));
            return pass ? kExitOk : kExitMismatch;
        }

        return kExitInput;
    } catch (const qdl::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
}
