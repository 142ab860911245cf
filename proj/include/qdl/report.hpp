#pragma once

#include <string>

#include <json.hpp>

#include "qdl/model.hpp"
#include "qdl/oracle.hpp"
#include "qdl/simulate.hpp"
#include "qdl/smoothfit.hpp"
#include "qdl/valuefn.hpp"

namespace qdl {

std::string version_string();

/// Shortest round-trip decimal representation (17 significant digits).
std::string format17(double x);

nlohmann::json to_json(const ModelParams& params);
ModelParams params_from_json(const nlohmann::json& j);

SolveOptions solve_options_from_json(const nlohmann::json& j);
SimConfig sim_config_from_json(const nlohmann::json& j);
OracleOptions oracle_options_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ValueFunction& v);
nlohmann::json to_json(const QviReport& r);
nlohmann::json to_json(const BoundsReport& r);
nlohmann::json to_json(const DividendPolicy& p);
nlohmann::json to_json(const SolutionBundle& s);
nlohmann::json to_json(const SimEstimate& e);
nlohmann::json to_json(const GridBoundaries& g);

/// CSV sample of the value function and its derivative on a uniform grid:
/// x, v(x,1), v(x,2), v'(x,1), v'(x,2), all with 17 significant digits.
std::string value_csv(const ValueFunction& v, double x_max, std::size_t n_points);

/// CSV dump of a grid-oracle solution: x, v per regime, control per regime.
std::string grid_csv(const GridSolution& sol);

void write_text_file(const std::string& path, const std::string& content);

} // namespace qdl
