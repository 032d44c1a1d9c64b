#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "reloop/domain.hpp"
#include "reloop/forest.hpp"

namespace reloop {

// Leave-one-out counterfactual imputations for one contrast.
//
// yhat0[i] and yhat1[i] never depend on unit i's own outcome or assignment;
// only on the other units' data and on baseline features. mhat[i] is
// p * yhat0[i] + (1 - p) * yhat1[i]. e0_sq / e1_sq are the mean squared
// errors of the imputations against the observed outcomes in the control /
// treated arm (0 for an empty arm).
struct LooImputation {
  std::vector<double> yhat0;
  std::vector<double> yhat1;
  std::vector<double> mhat;
  double e0_sq = 0.0;
  double e1_sq = 0.0;
  std::string imputer_id;
};

enum class ImputerKind { Zero, FixedRemnant, LooOls, LooForest, Ensemble };

std::string_view to_string(ImputerKind kind);

// Which inputs a forest consumes.
enum class ForestFeatures {
  Covariates,             // x only
  CovariatesAndRemnant,   // x plus yhat_r
};

struct ImputerSpec {
  ImputerKind kind = ImputerKind::Zero;
  std::optional<ForestParams> forest;  // present iff kind is LooForest/Ensemble
  ForestFeatures features = ForestFeatures::CovariatesAndRemnant;
};

// Strict enforces the documented per-arm minimum sizes and throws
// PreconditionError when they fail. Total skips those checks and relies on
// the fallback chains (leave-i-out arm mean, then leave-i-out grand mean,
// then 0), so the imputer is defined for every assignment vector.
enum class SizeCheck { Strict, Total };

LooImputation impute_zero(const ContrastDataset& ds);

// Uses the remnant predictions directly. Throws PreconditionError when any
// unit lacks one.
LooImputation impute_fixed_remnant(const ContrastDataset& ds);

// Per-arm intercept+slope OLS of y on yhat_r, refit without unit i. Strict
// mode requires at least three units in each arm.
LooImputation impute_loo_ols(const ContrastDataset& ds,
                             SizeCheck check = SizeCheck::Strict);

// Per-arm bagged regression forests. Both of unit i's imputations average
// only the trees whose bootstrap sample excluded i. Strict mode requires each
// arm to hold at least max(3, min_leaf) units.
LooImputation impute_loo_forest(const ContrastDataset& ds,
                                const ForestParams& params,
                                ForestFeatures features = ForestFeatures::CovariatesAndRemnant,
                                SizeCheck check = SizeCheck::Strict);

enum class Candidate : unsigned char { Ols, Forest };

struct EnsembleDiagnostics {
  LooImputation imputation;
  // Candidate chosen for unit i's arm-0 / arm-1 imputation.
  std::vector<Candidate> choice0;
  std::vector<Candidate> choice1;
  // Mean squared errors behind each choice (NaN when the arm had no other
  // unit to score against).
  std::vector<double> ols_mse0, ols_mse1, forest_mse0, forest_mse1;

  double forest_share() const;
};

// Per-unit, per-arm selection between the LOO-OLS and LOO-forest candidates.
// For unit i and arm z each candidate is scored by its mean squared error on
// the other units j of arm z, using predictions for j fitted without both i
// and j; the lower score wins and ties go to OLS.
LooImputation impute_ensemble(const ContrastDataset& ds,
                              const ForestParams& params,
                              SizeCheck check = SizeCheck::Strict);

EnsembleDiagnostics impute_ensemble_with_diagnostics(
    const ContrastDataset& ds, const ForestParams& params,
    SizeCheck check = SizeCheck::Strict);

// Dispatches on spec.kind. Throws PreconditionError when spec.forest does not
// match the kind.
LooImputation impute(const ContrastDataset& ds, const ImputerSpec& spec,
                     SizeCheck check = SizeCheck::Strict);

}  // namespace reloop
