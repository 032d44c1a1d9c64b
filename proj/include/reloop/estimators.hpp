#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "reloop/domain.hpp"
#include "reloop/forest.hpp"
#include "reloop/imputers.hpp"

namespace reloop {

enum class EstimatorId { TTest, Rebar, AncovaOls, LoopX, ReLoop, ReLoopPlus };

std::string_view to_string(EstimatorId id);
std::optional<EstimatorId> parse_estimator_id(std::string_view name);

// All six, in reporting order.
const std::vector<EstimatorId>& all_estimators();

struct EffectEstimate {
  EstimatorId estimator = EstimatorId::TTest;
  double tau_hat = 0.0;
  double var_hat = 0.0;
  std::size_t n = 0;
  std::size_t n1 = 0;
  std::size_t n0 = 0;
  double p = 0.5;
};

// Difference in observed arm means; Welch-form variance with realized arm
// sizes. Needs both arms non-empty, and two units per arm for the variance.
EffectEstimate diff_in_means(const ContrastDataset& ds);

// Difference in mean residuals y - yhat_r between arms.
EffectEstimate rebar(const ContrastDataset& ds);

// Coefficient on z in the OLS of y on (1, yhat_r, z) with an HC2 sandwich
// variance. A constant yhat_r is dropped, which reduces to diff_in_means.
EffectEstimate ancova_ols(const ContrastDataset& ds);

// Conservative variance estimate for a LOOP-type estimator:
//   (1/n) [ p/(1-p) E0^2 + (1-p)/p E1^2 + 2 E0 E1 ].
double loop_variance(const LooImputation& imp, std::size_t n, double p);

// Horvitz-Thompson form: sums over each arm divided by the expected arm size
// (np or n(1-p)); an empty arm contributes 0.
EffectEstimate loop_point(const ContrastDataset& ds, const LooImputation& imp,
                          EstimatorId id = EstimatorId::ReLoop);

struct EstimationPlan {
  std::vector<EstimatorId> estimators = all_estimators();
  ForestParams forest;
};

// Result of one estimator on one dataset: either an estimate or the reason
// it was skipped.
struct EstimatorOutcome {
  EstimatorId estimator = EstimatorId::TTest;
  std::optional<EffectEstimate> estimate;
  std::string skip_reason;
};

// Runs the planned estimators in reporting order:
//   TTest      diff_in_means
//   Rebar      rebar (needs yhat_r)
//   AncovaOls  ancova_ols (needs yhat_r)
//   LoopX      loop_point with a forest on x only
//   ReLoop     loop_point with LOO-OLS on yhat_r
//   ReLoopPlus loop_point with the OLS/forest ensemble on (x, yhat_r)
// A failing estimator is recorded with its reason; the batch never aborts.
std::vector<EstimatorOutcome> estimate_all(const ContrastDataset& ds,
                                           const EstimationPlan& plan);

// Single estimator with the same wiring as estimate_all; throws on failure.
// SizeCheck::Total lets the LOOP family run on any assignment vector.
EffectEstimate run_estimator(const ContrastDataset& ds, EstimatorId id,
                             const ForestParams& forest,
                             SizeCheck check = SizeCheck::Strict);

}  // namespace reloop
