#include "reloop/subgroups.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "reloop/errors.hpp"

namespace reloop {

std::string_view to_string(SubgroupSide side) {
  return side == SubgroupSide::Low ? "Low" : "High";
}

std::pair<double, double> pooled_terciles(std::span<const double> values) {
  if (values.size() < 3) {
    throw PreconditionError("pooled_terciles: need at least three values");
  }
  std::vector<double> sorted(values.begin(), values.end());
  for (double v : sorted) {
    if (!std::isfinite(v)) throw PreconditionError("pooled_terciles: non-finite value");
  }
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  // Smallest order statistic whose empirical CDF reaches num/3: rank ceil(n num / 3).
  auto at = [&](std::size_t num) {
    const std::size_t rank = (n * num + 2) / 3;
    return sorted[std::max<std::size_t>(rank, 1) - 1];
  };
  return {at(1), at(2)};
}

SubgroupScheme make_scheme(std::span<const ContrastDataset> datasets,
                           std::size_t covariate) {
  std::vector<double> pooled;
  std::string name;
  for (const auto& ds : datasets) {
    if (covariate >= ds.k()) {
      throw PreconditionError("make_scheme: covariate index out of range for contrast " +
                              ds.contrast_id());
    }
    if (name.empty()) name = ds.covariate_names()[covariate];
    for (const auto& u : ds.units()) pooled.push_back(u.x[covariate]);
  }
  const auto [lo, hi] = pooled_terciles(pooled);
  return SubgroupScheme{covariate, name, lo, hi};
}

std::vector<SubgroupResult> estimate_subgroups(const ContrastDataset& ds,
                                               const SubgroupScheme& scheme,
                                               const EstimationPlan& plan,
                                               std::size_t min_arm) {
  if (scheme.covariate >= ds.k()) {
    throw PreconditionError("estimate_subgroups: covariate index out of range");
  }
  std::vector<SubgroupResult> out;
  for (SubgroupSide side : {SubgroupSide::Low, SubgroupSide::High}) {
    const ContrastDataset sub = ds.filter([&](const UnitRecord& u) {
      const double v = u.x[scheme.covariate];
      return side == SubgroupSide::Low ? v < scheme.q_lo : v > scheme.q_hi;
    });
    SubgroupResult r;
    r.side = side;
    r.n1 = sub.n_treated();
    r.n0 = sub.n_control();
    if (std::min(r.n1, r.n0) < min_arm || sub.empty()) {
      r.skipped = RejectionReason::ArmTooSmall;
    } else {
      // Only the variance rule is needed here; the arm rule was applied above.
      const ValidationVerdict v = validate_contrast(sub, 0, 0.5);
      if (v.has(RejectionReason::ZeroOutcomeVariance)) {
        r.skipped = RejectionReason::ZeroOutcomeVariance;
      } else {
        r.outcomes = estimate_all(sub, plan);
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

PopulationWeights::PopulationWeights(std::vector<std::pair<std::string, double>> shares)
    : shares_(std::move(shares)) {
  if (shares_.empty()) throw DataError("PopulationWeights: no subgroups");
  std::set<std::string> labels;
  double total = 0.0;
  for (const auto& [label, pi] : shares_) {
    if (!(pi >= 0.0 && pi <= 1.0)) {
      throw DataError("PopulationWeights: weight for '" + label + "' outside [0,1]");
    }
    if (!labels.insert(label).second) {
      throw DataError("PopulationWeights: duplicate label '" + label + "'");
    }
    total += pi;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw DataError("PopulationWeights: weights sum to " + std::to_string(total) +
                    ", not 1");
  }
}

std::optional<double> PopulationWeights::weight(const std::string& label) const {
  for (const auto& [l, pi] : shares_) {
    if (l == label) return pi;
  }
  return std::nullopt;
}

EffectEstimate post_stratify(const std::map<std::string, EffectEstimate>& estimates,
                             const PopulationWeights& weights) {
  if (estimates.size() != weights.shares().size()) {
    throw PreconditionError("post_stratify: subgroup labels do not match the weights");
  }
  EffectEstimate out;
  bool first = true;
  for (const auto& [label, pi] : weights.shares()) {
    auto it = estimates.find(label);
    if (it == estimates.end()) {
      throw PreconditionError("post_stratify: no estimate for subgroup '" + label + "'");
    }
    const EffectEstimate& e = it->second;
    if (first) {
      out.estimator = e.estimator;
      out.p = e.p;
      first = false;
    } else if (e.estimator != out.estimator) {
      throw PreconditionError("post_stratify: subgroup estimates come from different estimators");
    }
    out.tau_hat += pi * e.tau_hat;
    out.var_hat += pi * pi * e.var_hat;
    out.n += e.n;
    out.n1 += e.n1;
    out.n0 += e.n0;
  }
  return out;
}

double decompose_bias(double p1, double pi1, double tau1, double tau2) {
  if (!(p1 >= 0.0 && p1 <= 1.0 && pi1 >= 0.0 && pi1 <= 1.0)) {
    throw PreconditionError("decompose_bias: proportions must lie in [0,1]");
  }
  return (p1 - pi1) * (tau1 - tau2);
}

}  // namespace reloop
