#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "reloop/estimators.hpp"

namespace reloop::cli {

// Options shared by the commands that read a contrast CSV.
struct AnalysisOptions {
  std::string input;
  std::optional<std::string> remnant_predictions;
  std::optional<std::string> remnant_model;
  double alpha = 0.05;
  std::optional<std::size_t> min_arm;  // default 5(k+2)+1
  double binom_alpha = 0.1;
  std::uint64_t seed = 0;
  std::vector<EstimatorId> estimators = all_estimators();
  std::size_t trees = 500;
  unsigned threads = 1;
};

struct SubgroupOptions {
  AnalysisOptions analysis;
  std::vector<std::string> covariates;  // empty: every covariate
  std::size_t subgroup_min_arm = 10;
};

struct PoststratOptions {
  AnalysisOptions analysis;
  std::string weights;
  std::size_t subgroup_min_arm = 2;
};

struct SimulateOptions {
  std::string config;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

struct RemnantTrainOptions {
  std::string input;
  double lambda = 1.0;
  std::vector<std::string> features;  // empty: every column except y
};

struct RemnantPredictOptions {
  std::string input;
  std::string model;
};

// Every command returns its complete output text. For fixed inputs, flags
// and seed the text is byte-identical and does not depend on `threads`.
std::string cmd_validate(const AnalysisOptions& opts);
std::string cmd_analyze(const AnalysisOptions& opts);
std::string cmd_subgroup(const SubgroupOptions& opts);
std::string cmd_poststratify(const PoststratOptions& opts);
std::string cmd_simulate(const SimulateOptions& opts);
// Model JSON.
std::string cmd_remnant_train(const RemnantTrainOptions& opts);
// CSV of contrast_id, unit_id, yhat_r.
std::string cmd_remnant_predict(const RemnantPredictOptions& opts);

// {"error": {"kind": ..., "message": ..., "line": ..., "column": ...}}
nlohmann::ordered_json error_record(const std::exception& e);

// Exit status for an exception escaping a command.
int exit_code(const std::exception& e);

}  // namespace reloop::cli
