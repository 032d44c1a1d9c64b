#include "reloop/domain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "reloop/errors.hpp"

namespace reloop {

ContrastDataset::ContrastDataset(std::string contrast_id,
                                 std::vector<UnitRecord> units, double p,
                                 std::vector<std::string> covariate_names)
    : contrast_id_(std::move(contrast_id)),
      units_(std::move(units)),
      p_(p),
      covariate_names_(std::move(covariate_names)) {
  if (!(p_ > 0.0 && p_ < 1.0)) {
    throw DataError("contrast " + contrast_id_ +
                    ": assignment probability must lie in (0,1)");
  }
  k_ = units_.empty() ? covariate_names_.size() : units_.front().x.size();
  if (!covariate_names_.empty() && covariate_names_.size() != k_) {
    throw DataError("contrast " + contrast_id_ + ": " +
                    std::to_string(covariate_names_.size()) +
                    " covariate names for " + std::to_string(k_) +
                    " covariates");
  }
  if (covariate_names_.empty()) {
    for (std::size_t j = 0; j < k_; ++j) {
      covariate_names_.push_back("x" + std::to_string(j + 1));
    }
  }

  std::unordered_set<std::string> ids;
  ids.reserve(units_.size());
  has_remnant_ = !units_.empty();
  for (const auto& u : units_) {
    const std::string where = "contrast " + contrast_id_ + ", unit " + u.unit_id;
    if (u.z != 0 && u.z != 1) {
      throw DataError(where + ": treatment indicator must be 0 or 1, got " +
                      std::to_string(u.z));
    }
    if (!std::isfinite(u.y)) throw DataError(where + ": outcome is not finite");
    if (u.x.size() != k_) {
      throw DataError(where + ": expected " + std::to_string(k_) +
                      " covariates, got " + std::to_string(u.x.size()));
    }
    for (double v : u.x) {
      if (!std::isfinite(v)) {
        throw DataError(where + ": covariate is not finite");
      }
    }
    if (u.yhat_r && !std::isfinite(*u.yhat_r)) {
      throw DataError(where + ": remnant prediction is not finite");
    }
    if (!ids.insert(u.unit_id).second) {
      throw DataError(where + ": duplicate unit id");
    }
    if (!u.yhat_r) has_remnant_ = false;
    n1_ += static_cast<std::size_t>(u.z);
  }
}

std::string_view to_string(RejectionReason reason) {
  switch (reason) {
    case RejectionReason::ZeroOutcomeVariance:
      return "ZeroOutcomeVariance";
    case RejectionReason::ArmTooSmall:
      return "ArmTooSmall";
    case RejectionReason::RandomizationProbSuspect:
      return "RandomizationProbSuspect";
  }
  return "Unknown";
}

bool ValidationVerdict::has(RejectionReason r) const {
  return std::find(reasons.begin(), reasons.end(), r) != reasons.end();
}

std::size_t default_min_per_arm(std::size_t k) { return 5 * (k + 2) + 1; }

namespace {

double log_sum_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

}  // namespace

double binomial_test(std::size_t n1, std::size_t n, double p0) {
  if (!(p0 > 0.0 && p0 < 1.0)) {
    throw PreconditionError("binomial_test: p0 must lie in (0,1)");
  }
  if (n == 0 || n1 > n) {
    throw PreconditionError("binomial_test: need 0 <= n1 <= n and n >= 1");
  }
  const double nn = static_cast<double>(n);
  const double log_p = std::log(p0);
  const double log_q = std::log1p(-p0);
  const double log_nfact = std::lgamma(nn + 1.0);
  auto log_pmf = [&](std::size_t k) {
    const double kk = static_cast<double>(k);
    // Grouped so that k and n - k give bit-identical terms when p0 = 1/2.
    return log_nfact - (std::lgamma(kk + 1.0) + std::lgamma(nn - kk + 1.0)) +
           (kk * log_p + (nn - kk) * log_q);
  };

  // Both tails are summed from the extreme end inward.
  double log_lower = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k <= n1; ++k) log_lower = log_sum_exp(log_lower, log_pmf(k));
  double log_upper = -std::numeric_limits<double>::infinity();
  for (std::size_t k = n + 1; k-- > n1;) log_upper = log_sum_exp(log_upper, log_pmf(k));

  const double tail = std::exp(std::min(log_lower, log_upper));
  return std::min(1.0, 2.0 * tail);
}

namespace {

// True when the arm is empty or every outcome in it is identical.
bool arm_has_zero_variance(const ContrastDataset& ds, int arm) {
  std::optional<double> first;
  for (const auto& u : ds.units()) {
    if (u.z != arm) continue;
    if (!first) {
      first = u.y;
    } else if (u.y != *first) {
      return false;
    }
  }
  return true;
}

}  // namespace

ValidationVerdict validate_contrast(const ContrastDataset& ds,
                                    std::size_t min_per_arm,
                                    double binom_alpha) {
  if (ds.empty()) {
    throw PreconditionError("validate_contrast: contrast " + ds.contrast_id() +
                            " has no units");
  }
  if (!(binom_alpha > 0.0 && binom_alpha < 1.0)) {
    throw PreconditionError("validate_contrast: binom_alpha must lie in (0,1)");
  }
  ValidationVerdict v;
  v.contrast_id = ds.contrast_id();
  v.n1 = ds.n_treated();
  v.n0 = ds.n_control();
  v.binom_p = binomial_test(v.n1, ds.n(), ds.p());

  if (arm_has_zero_variance(ds, 0) || arm_has_zero_variance(ds, 1)) {
    v.reasons.push_back(RejectionReason::ZeroOutcomeVariance);
  }
  if (std::min(v.n1, v.n0) < min_per_arm) {
    v.reasons.push_back(RejectionReason::ArmTooSmall);
  }
  if (v.binom_p < binom_alpha) {
    v.reasons.push_back(RejectionReason::RandomizationProbSuspect);
  }
  v.eligible = v.reasons.empty();
  return v;
}

ValidationVerdict validate_contrast(const ContrastDataset& ds) {
  return validate_contrast(ds, default_min_per_arm(ds.k()));
}

CovariateFill fill_missing_covariates(
    const std::vector<std::vector<std::optional<double>>>& rows,
    const std::vector<std::string>& names) {
  const std::size_t k = names.size();
  std::vector<double> means(k, 0.0);
  std::vector<std::size_t> present(k, 0);
  for (const auto& row : rows) {
    if (row.size() != k) {
      throw DataError("fill_missing_covariates: row width does not match names");
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (row[j]) {
        means[j] += *row[j];
        ++present[j];
      }
    }
  }
  std::vector<std::size_t> with_missing;
  for (std::size_t j = 0; j < k; ++j) {
    if (present[j] > 0) means[j] /= static_cast<double>(present[j]);
    if (present[j] < rows.size()) with_missing.push_back(j);
  }

  CovariateFill out;
  out.names = names;
  for (std::size_t j : with_missing) out.names.push_back(names[j] + "_missing");
  out.rows.reserve(rows.size());
  for (const auto& row : rows) {
    std::vector<double> filled(k);
    for (std::size_t j = 0; j < k; ++j) filled[j] = row[j].value_or(means[j]);
    for (std::size_t j : with_missing) filled.push_back(row[j] ? 0.0 : 1.0);
    out.rows.push_back(std::move(filled));
  }
  return out;
}

}  // namespace reloop
