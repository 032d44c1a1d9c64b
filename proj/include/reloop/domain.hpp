#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace reloop {

// One randomized unit. z is the treatment indicator (0 control, 1 treated),
// x the baseline covariates, yhat_r the remnant model's prediction of the
// outcome (if one was supplied).
struct UnitRecord {
  std::string unit_id;
  int z = 0;
  double y = 0.0;
  std::vector<double> x;
  std::optional<double> yhat_r;
  std::optional<std::string> group;
};

// A single pairwise randomized comparison. Immutable once constructed; the
// constructor enforces every structural invariant and throws DataError
// otherwise:
//   * z in {0, 1}, y finite, covariates and remnant predictions finite
//   * every unit carries the same number of covariates
//   * 0 < p < 1
//   * unit ids unique
class ContrastDataset {
 public:
  ContrastDataset(std::string contrast_id, std::vector<UnitRecord> units,
                  double p = 0.5, std::vector<std::string> covariate_names = {});

  const std::string& contrast_id() const { return contrast_id_; }
  std::span<const UnitRecord> units() const { return units_; }
  const UnitRecord& unit(std::size_t i) const { return units_[i]; }
  std::size_t n() const { return units_.size(); }
  bool empty() const { return units_.empty(); }
  double p() const { return p_; }
  std::size_t k() const { return k_; }
  const std::vector<std::string>& covariate_names() const {
    return covariate_names_;
  }

  std::size_t n_treated() const { return n1_; }
  std::size_t n_control() const { return units_.size() - n1_; }

  // True when every unit carries a remnant prediction.
  bool has_remnant() const { return has_remnant_; }

  // Copy restricted to the units where keep(unit) is true. Same p and names.
  template <typename Pred>
  ContrastDataset filter(Pred keep) const {
    std::vector<UnitRecord> kept;
    for (const auto& u : units_) {
      if (keep(u)) kept.push_back(u);
    }
    return ContrastDataset(contrast_id_, std::move(kept), p_,
                           covariate_names_);
  }

 private:
  std::string contrast_id_;
  std::vector<UnitRecord> units_;
  double p_;
  std::size_t k_ = 0;
  std::size_t n1_ = 0;
  bool has_remnant_ = false;
  std::vector<std::string> covariate_names_;
};

enum class RejectionReason {
  ZeroOutcomeVariance,
  ArmTooSmall,
  RandomizationProbSuspect,
};

std::string_view to_string(RejectionReason reason);

struct ValidationVerdict {
  std::string contrast_id;
  bool eligible = false;
  std::vector<RejectionReason> reasons;
  double binom_p = 1.0;
  std::size_t n1 = 0;
  std::size_t n0 = 0;

  bool has(RejectionReason r) const;
};

// 5(k+2)+1: at least five observations per parameter of a k-covariate model.
std::size_t default_min_per_arm(std::size_t k);

// Exact central two-sided binomial test of H0: Pr(success) = p0, evaluated in
// log space. Throws PreconditionError if p0 is not in (0,1) or n1 > n or n == 0.
double binomial_test(std::size_t n1, std::size_t n, double p0);

// Applies the exclusion rules. Pure and deterministic. Throws
// PreconditionError on an empty dataset.
ValidationVerdict validate_contrast(const ContrastDataset& ds,
                                    std::size_t min_per_arm,
                                    double binom_alpha = 0.1);

// Same, with min_per_arm = default_min_per_arm(ds.k()).
ValidationVerdict validate_contrast(const ContrastDataset& ds);

// Result of filling missing covariate cells.
struct CovariateFill {
  std::vector<std::vector<double>> rows;
  std::vector<std::string> names;
};

// Mean-imputes missing covariate entries column by column and appends a 0/1
// missingness indicator column (named "<name>_missing") for every column that
// had at least one missing entry. Columns that are entirely missing are filled
// with 0. Rows must all have names.size() entries.
CovariateFill fill_missing_covariates(
    const std::vector<std::vector<std::optional<double>>>& rows,
    const std::vector<std::string>& names);

}  // namespace reloop
