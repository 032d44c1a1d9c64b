#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "reloop/estimators.hpp"

namespace reloop {

// Standard normal CDF and quantile (Boost.Math; CDF via erfc).
double normal_cdf(double x);
double normal_quantile(double prob);

struct InferenceResult {
  EffectEstimate estimate;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double p_value = 1.0;
  double alpha = 0.05;
};

// Normal-approximation interval and two-sided p-value for H0: tau = 0.
// With se == 0 the p-value is 0 if tau_hat != 0 and 1 otherwise.
InferenceResult z_inference(const EffectEstimate& est, double alpha = 0.05);

// Multiple-testing adjustment in input order.
struct FdrAdjustment {
  std::vector<bool> rejected;
  std::vector<double> adjusted;
  std::size_t rejections() const;
};

// Benjamini-Hochberg step-up at level alpha: with p sorted ascending (ties
// broken by input index) reject ranks 1..k for the largest k with
// p(k) <= k alpha / m. Adjusted p(i) = min_{j >= i} min(1, m p(j) / j).
FdrAdjustment bh_adjust(std::span<const double> pvals, double alpha);

// Benjamini-Yekutieli: as BH with m replaced by m * (1 + 1/2 + ... + 1/m).
FdrAdjustment by_adjust(std::span<const double> pvals, double alpha);

// Sampling-variance ratio baseline / method: the factor by which the method
// effectively multiplies the sample size. Throws PreconditionError when
// v_method is not positive.
double variance_ratio(double v_baseline, double v_method);

}  // namespace reloop
