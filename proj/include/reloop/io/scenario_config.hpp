#pragma once

#include <cstddef>
#include <istream>
#include <string>
#include <vector>

#include "json.hpp"
#include "reloop/estimators.hpp"
#include "reloop/forest.hpp"
#include "reloop/simulation.hpp"

namespace reloop::io {

enum class SimulationMode { MonteCarlo, Exact };

// Declarative simulation scenario. File format: one `key = value` per line,
// `#` starts a comment, blank lines ignored. Keys:
//
//   n, p, k, rho, nonlinear_share, intercept, tau, tau_het,
//   group_share_sample, group_share_population, group_effect_gap,
//   remnant_size, remnant_shift, remnant_lambda      -> ScenarioSpec
//   mode          monte_carlo | exact            (default monte_carlo)
//   replications  Monte Carlo replications       (default 1000)
//   estimators    comma list of estimator names  (default all six)
//   baselines     comma list for variance ratios (default TTest)
//   alpha         interval level                 (default 0.05)
//   trees, min_leaf, mtry, max_depth             -> forest parameters
//
// Unknown or repeated keys and malformed values raise ParseError.
struct ScenarioConfig {
  ScenarioSpec spec;
  SimulationMode mode = SimulationMode::MonteCarlo;
  std::size_t replications = 1000;
  std::vector<EstimatorId> estimators = all_estimators();
  std::vector<std::string> baselines = {"TTest"};
  double alpha = 0.05;
  ForestParams forest;
};

ScenarioConfig parse_scenario(std::istream& in);
ScenarioConfig load_scenario_file(const std::string& path);

nlohmann::ordered_json to_json(const ScenarioConfig& config);

// Parses "TTest,ReLoop" style lists; throws ConfigError on unknown names.
std::vector<EstimatorId> parse_estimator_list(const std::string& list);

}  // namespace reloop::io
