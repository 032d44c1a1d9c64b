#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "reloop/domain.hpp"
#include "reloop/estimators.hpp"

namespace reloop {

// Tercile split of one covariate: Low is x < q_lo, High is x > q_hi; values in
// [q_lo, q_hi] belong to neither subgroup.
struct SubgroupScheme {
  std::size_t covariate = 0;
  std::string covariate_name;
  double q_lo = 0.0;
  double q_hi = 0.0;
};

enum class SubgroupSide { Low, High };
std::string_view to_string(SubgroupSide side);

// Type-1 (inverse empirical CDF) quantiles at 1/3 and 2/3. Needs at least
// three finite values; throws PreconditionError otherwise.
std::pair<double, double> pooled_terciles(std::span<const double> values);

// Pools covariate `covariate` over every dataset and builds its scheme.
SubgroupScheme make_scheme(std::span<const ContrastDataset> datasets,
                           std::size_t covariate);

struct SubgroupResult {
  SubgroupSide side = SubgroupSide::Low;
  std::size_t n1 = 0;
  std::size_t n0 = 0;
  // Empty when the subgroup was estimated.
  std::optional<RejectionReason> skipped;
  std::vector<EstimatorOutcome> outcomes;
};

// Estimates the Low and High subgroups of ds. A subgroup is skipped when
// either arm has fewer than min_arm units (ArmTooSmall) or when an arm has no
// outcome variance (ZeroOutcomeVariance).
std::vector<SubgroupResult> estimate_subgroups(const ContrastDataset& ds,
                                               const SubgroupScheme& scheme,
                                               const EstimationPlan& plan,
                                               std::size_t min_arm = 10);

// Population shares pi_k by subgroup label. Validated on construction: each
// share in [0,1], labels distinct, shares summing to 1 within 1e-12.
class PopulationWeights {
 public:
  explicit PopulationWeights(std::vector<std::pair<std::string, double>> shares);

  const std::vector<std::pair<std::string, double>>& shares() const { return shares_; }
  std::optional<double> weight(const std::string& label) const;

 private:
  std::vector<std::pair<std::string, double>> shares_;
};

// Sum_k pi_k tau_k, with variance Sum_k pi_k^2 v_k (subgroups treated as
// independent). The estimates must cover exactly the weighted labels and
// share one estimator id.
EffectEstimate post_stratify(const std::map<std::string, EffectEstimate>& estimates,
                             const PopulationWeights& weights);

// External bias of a sample-average effect as an estimate of the population
// effect in the two-group case: (p1 - pi1) (tau1 - tau2).
double decompose_bias(double p1, double pi1, double tau1, double tau2);

}  // namespace reloop
