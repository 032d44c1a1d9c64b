#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "reloop/domain.hpp"
#include "reloop/io/csv.hpp"
#include "reloop/remnant_model.hpp"
#include "reloop/subgroups.hpp"

namespace reloop::io {

// Contrast CSV layout: required columns contrast_id, z, y; optional p
// (default 0.5, constant within a contrast), yhat_r, group and unit_id
// (default: the 1-based data row number). Every other column is a covariate,
// in header order.
//
// Rows with a missing z or y are dropped and counted. Missing covariate cells
// are mean-filled within their contrast; each covariate with a missing cell
// anywhere in the file gets a "<name>_missing" indicator column in every
// contrast, so all contrasts share one covariate layout.
struct ContrastBatch {
  std::vector<ContrastDataset> contrasts;  // in order of first appearance
  std::vector<std::string> covariate_names;
  std::size_t dropped_rows = 0;
};

ContrastBatch load_contrasts(const CsvTable& table);
ContrastBatch load_contrasts_file(const std::string& path);

// Keyed by (contrast_id, unit_id).
using RemnantPredictions = std::map<std::pair<std::string, std::string>, double>;

// CSV with columns contrast_id, unit_id, yhat_r.
RemnantPredictions load_remnant_predictions(const std::string& path);

// Copies ds with yhat_r replaced from the table; throws DataError naming the
// first unit without a prediction.
ContrastDataset attach_remnant(const ContrastDataset& ds, const RemnantPredictions& preds);

// Copies ds with yhat_r from the model. The model's features are matched to
// covariates by name.
ContrastDataset attach_remnant(const ContrastDataset& ds, const RemnantModel& model);

// CSV with columns group, pi.
PopulationWeights load_weights(const std::string& path);

// Remnant training table: outcome column y; the features are the named
// columns, or every other column when `features` is empty. No missing cells.
struct RemnantTable {
  Eigen::MatrixXd features;
  Eigen::VectorXd outcomes;
  std::vector<std::string> names;
};

RemnantTable load_remnant_table(const std::string& path,
                                const std::vector<std::string>& features = {});

}  // namespace reloop::io
