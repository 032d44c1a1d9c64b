#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

namespace reloop {

// Ridge regression trained on the remnant (units outside the experiment).
// Features are standardized with the training means and standard deviations;
// coefficients live on the standardized scale with the intercept first and
// the intercept is not penalized.
struct RemnantModel {
  std::vector<double> coefficients;  // size k + 1
  double lambda = 0.0;
  std::vector<double> means;         // size k
  std::vector<double> scales;        // size k, all > 0
  std::vector<std::string> feature_names;

  std::size_t feature_count() const { return means.size(); }
};

// features: n_rem x k. Needs n_rem >= k + 2 or lambda > 0; throws
// PreconditionError for a singular system. Rows are put in a canonical order
// before accumulation, so any permutation of the rows trains the same model
// bit for bit.
RemnantModel train_remnant(const Eigen::MatrixXd& features,
                           const Eigen::VectorXd& outcomes, double lambda,
                           std::vector<std::string> feature_names = {});

// Throws DataError when the feature width differs from the model's.
Eigen::VectorXd predict_remnant(const RemnantModel& model,
                                const Eigen::MatrixXd& features);

// Versioned JSON document:
//   {"format": "reloop-remnant-model", "version": 1, "lambda": ...,
//    "feature_names": [...], "means": [...], "scales": [...],
//    "coefficients": [...]}
nlohmann::ordered_json to_json(const RemnantModel& model);
RemnantModel remnant_model_from_json(const nlohmann::json& doc);

void save_remnant_model(const RemnantModel& model, const std::string& path);
RemnantModel load_remnant_model(const std::string& path);

}  // namespace reloop
