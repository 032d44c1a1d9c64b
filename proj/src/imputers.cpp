#include "reloop/imputers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "reloop/errors.hpp"

namespace reloop {

std::string_view to_string(ImputerKind kind) {
  switch (kind) {
    case ImputerKind::Zero: return "Zero";
    case ImputerKind::FixedRemnant: return "FixedRemnant";
    case ImputerKind::LooOls: return "LooOls";
    case ImputerKind::LooForest: return "LooForest";
    case ImputerKind::Ensemble: return "Ensemble";
  }
  return "Unknown";
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Mean of a sequence accumulated relative to its first element, so that a
// constant sequence averages to exactly that constant.
class ShiftedMean {
 public:
  void add(double v) {
    if (count_ == 0) shift_ = v;
    sum_ += v - shift_;
    ++count_;
  }
  std::size_t count() const { return count_; }
  double value() const { return count_ == 0 ? 0.0 : shift_ + sum_ / static_cast<double>(count_); }

 private:
  double shift_ = 0.0;
  double sum_ = 0.0;
  std::size_t count_ = 0;
};

LooImputation finalize(const ContrastDataset& ds, std::vector<double> yhat0,
                       std::vector<double> yhat1, std::string id) {
  LooImputation imp;
  const double p = ds.p();
  imp.mhat.resize(ds.n());
  double ss0 = 0.0, ss1 = 0.0;
  std::size_t n0 = 0, n1 = 0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    imp.mhat[i] = p * yhat0[i] + (1.0 - p) * yhat1[i];
    const auto& u = ds.unit(i);
    if (u.z == 1) {
      ss1 += (yhat1[i] - u.y) * (yhat1[i] - u.y);
      ++n1;
    } else {
      ss0 += (yhat0[i] - u.y) * (yhat0[i] - u.y);
      ++n0;
    }
  }
  imp.e0_sq = n0 > 0 ? ss0 / static_cast<double>(n0) : 0.0;
  imp.e1_sq = n1 > 0 ? ss1 / static_cast<double>(n1) : 0.0;
  imp.yhat0 = std::move(yhat0);
  imp.yhat1 = std::move(yhat1);
  imp.imputer_id = std::move(id);
  return imp;
}

void require_remnant(const ContrastDataset& ds, const char* who) {
  if (!ds.has_remnant()) {
    throw PreconditionError(std::string(who) + ": contrast " + ds.contrast_id() +
                            " lacks remnant predictions for some units");
  }
}

void require_arm_sizes(const ContrastDataset& ds, std::size_t minimum, const char* who) {
  if (std::min(ds.n_treated(), ds.n_control()) < minimum) {
    throw PreconditionError(std::string(who) + ": contrast " + ds.contrast_id() +
                            " needs at least " + std::to_string(minimum) +
                            " units per arm");
  }
}

// Mean outcome of the units other than `skip_a`/`skip_b` (SIZE_MAX to skip
// nothing) that satisfy `in_set`, falling back to the same over all units,
// then to 0.
template <typename InSet>
double fallback_mean(const ContrastDataset& ds, InSet in_set, std::size_t skip_a,
                     std::size_t skip_b = std::numeric_limits<std::size_t>::max()) {
  ShiftedMean arm, grand;
  for (std::size_t j = 0; j < ds.n(); ++j) {
    if (j == skip_a || j == skip_b) continue;
    grand.add(ds.unit(j).y);
    if (in_set(j)) arm.add(ds.unit(j).y);
  }
  if (arm.count() > 0) return arm.value();
  return grand.value();
}

// Multiplicities of the remnant predictions within one arm; used to decide
// exactly whether a leave-out regressor is constant.
class ValueCounts {
 public:
  void add(double v) { ++counts_[v]; }
  std::size_t distinct() const { return counts_.size(); }
  // Distinct values left after removing the listed values (each once).
  std::size_t distinct_without(std::initializer_list<double> removed) const {
    std::size_t d = counts_.size();
    std::map<double, std::size_t> taken;
    for (double v : removed) {
      auto it = counts_.find(v);
      if (it == counts_.end()) continue;
      if (++taken[v] == it->second) --d;
    }
    return d;
  }

 private:
  std::map<double, std::size_t> counts_;
};

struct ArmLine {
  std::size_t n = 0;
  double x_mean = 0.0;
  double y_mean = 0.0;
  double sxx = 0.0;
  double sxy = 0.0;
  ValueCounts values;
  double slope() const { return sxy / sxx; }
  double at(double x) const { return y_mean + slope() * (x - x_mean); }
};

ArmLine fit_arm_line(const ContrastDataset& ds, int arm) {
  ArmLine line;
  ShiftedMean xm, ym;
  for (const auto& u : ds.units()) {
    if (u.z != arm) continue;
    xm.add(*u.yhat_r);
    ym.add(u.y);
    line.values.add(*u.yhat_r);
  }
  line.n = xm.count();
  line.x_mean = xm.value();
  line.y_mean = ym.value();
  for (const auto& u : ds.units()) {
    if (u.z != arm) continue;
    const double dx = *u.yhat_r - line.x_mean;
    line.sxx += dx * dx;
    line.sxy += dx * (u.y - line.y_mean);
  }
  return line;
}

// Leave-one-out OLS imputations via the leverage identity.
void loo_ols_predictions(const ContrastDataset& ds, std::vector<double>& yhat0,
                         std::vector<double>& yhat1) {
  const std::size_t n = ds.n();
  yhat0.assign(n, 0.0);
  yhat1.assign(n, 0.0);
  for (int arm = 0; arm < 2; ++arm) {
    const ArmLine line = fit_arm_line(ds, arm);
    auto in_arm = [&](std::size_t j) { return ds.unit(j).z == arm; };
    std::vector<double>& out = arm == 0 ? yhat0 : yhat1;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& u = ds.unit(i);
      const double xi = *u.yhat_r;
      if (u.z == arm) {
        const bool degenerate =
            line.n < 3 || line.values.distinct_without({xi}) <= 1;
        if (degenerate) {
          out[i] = fallback_mean(ds, in_arm, i);
          continue;
        }
        const double nz = static_cast<double>(line.n);
        const double dx = xi - line.x_mean;
        const double h = 1.0 / nz + dx * dx / line.sxx;
        const double fit = line.at(xi);
        out[i] = (fit - h * u.y) / (1.0 - h);
      } else {
        if (line.n < 2 || line.values.distinct() <= 1) {
          out[i] = fallback_mean(ds, in_arm, i);
        } else {
          out[i] = line.at(xi);
        }
      }
    }
  }
}

Eigen::MatrixXd forest_features(const ContrastDataset& ds, ForestFeatures which) {
  const bool with_remnant = which == ForestFeatures::CovariatesAndRemnant;
  if (with_remnant) require_remnant(ds, "forest imputer");
  const Eigen::Index cols = static_cast<Eigen::Index>(ds.k() + (with_remnant ? 1 : 0));
  Eigen::MatrixXd X(static_cast<Eigen::Index>(ds.n()), cols);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto& u = ds.unit(i);
    for (std::size_t j = 0; j < ds.k(); ++j) {
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = u.x[j];
    }
    if (with_remnant) X(static_cast<Eigen::Index>(i), cols - 1) = *u.yhat_r;
  }
  return X;
}

ArmForests grow_arm_forests(const ContrastDataset& ds, const ForestParams& params,
                            ForestFeatures which) {
  const Eigen::MatrixXd X = forest_features(ds, which);
  std::vector<double> y(ds.n());
  std::vector<int> arms(ds.n());
  for (std::size_t i = 0; i < ds.n(); ++i) {
    y[i] = ds.unit(i).y;
    arms[i] = ds.unit(i).z;
  }
  return ArmForests(X, y, arms, params);
}

void loo_forest_predictions(const ContrastDataset& ds, const ArmForests& forests,
                            std::vector<double>& yhat0, std::vector<double>& yhat1) {
  const std::size_t n = ds.n();
  const BootstrapCounts& counts = forests.counts();
  yhat0.assign(n, 0.0);
  yhat1.assign(n, 0.0);
  for (int arm = 0; arm < 2; ++arm) {
    std::vector<double>& out = arm == 0 ? yhat0 : yhat1;
    const Eigen::MatrixXd& pred = forests.predictions(arm);
    auto in_arm = [&](std::size_t j) { return ds.unit(j).z == arm; };
    for (std::size_t i = 0; i < n; ++i) {
      ShiftedMean avg;
      for (std::size_t t = 0; t < counts.trees(); ++t) {
        if (counts.out_of_bag(t, i) && forests.present(arm, t)) {
          avg.add(pred(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)));
        }
      }
      out[i] = avg.count() > 0 ? avg.value() : fallback_mean(ds, in_arm, i);
    }
  }
}

std::size_t forest_min_arm(const ForestParams& params) {
  return std::max<std::size_t>(3, params.min_leaf);
}

// Leave-{i,j}-out OLS scores. For unit i and arm z: the mean over j in arm z,
// j != i, of the squared error of an OLS line fitted to arm z without i and j
// and evaluated at j. Sums are rebuilt for every i, so the result involves no
// arithmetic on unit i's own data.
std::vector<double> pairwise_ols_mse(const ContrastDataset& ds, int arm) {
  const std::size_t n = ds.n();
  std::vector<double> mse(n, kNaN);
  std::vector<std::size_t> members;
  ValueCounts values;
  for (std::size_t j = 0; j < n; ++j) {
    if (ds.unit(j).z == arm) {
      members.push_back(j);
      values.add(*ds.unit(j).yhat_r);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const bool i_in_arm = ds.unit(i).z == arm;
    ShiftedMean xm, ym;
    for (std::size_t j : members) {
      if (j == i) continue;
      xm.add(*ds.unit(j).yhat_r);
      ym.add(ds.unit(j).y);
    }
    const std::size_t count = xm.count();
    if (count == 0) continue;
    double grand_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) grand_sum += ds.unit(j).y;
    }
    const double mx = xm.value();
    const double my = ym.value();
    double su = 0.0, sv = 0.0, suu = 0.0, suv = 0.0;
    for (std::size_t j : members) {
      if (j == i) continue;
      const double uj = *ds.unit(j).yhat_r - mx;
      const double vj = ds.unit(j).y - my;
      su += uj;
      sv += vj;
      suu += uj * uj;
      suv += uj * vj;
    }
    const double xi = *ds.unit(i).yhat_r;
    double sq = 0.0;
    for (std::size_t j : members) {
      if (j == i) continue;
      const double xj = *ds.unit(j).yhat_r;
      const double yj = ds.unit(j).y;
      const std::size_t rest = count - 1;
      double pred = 0.0;
      if (rest == 0) {
        pred = n > 2 ? (grand_sum - yj) / static_cast<double>(n - 2) : 0.0;
      } else {
        const double uj = xj - mx;
        const double vj = yj - my;
        const double nr = static_cast<double>(rest);
        const double mu = (su - uj) / nr;
        const double mv = (sv - vj) / nr;
        const std::size_t distinct =
            i_in_arm ? values.distinct_without({xi, xj}) : values.distinct_without({xj});
        if (distinct <= 1) {
          pred = my + mv;
        } else {
          const double sxx = (suu - uj * uj) - nr * mu * mu;
          const double sxy = (suv - uj * vj) - nr * mu * mv;
          pred = my + mv + (sxy / sxx) * (uj - mu);
        }
      }
      sq += (pred - yj) * (pred - yj);
    }
    mse[i] = sq / static_cast<double>(count);
  }
  return mse;
}

// Forest analogue of pairwise_ols_mse: the prediction for j when scoring unit
// i averages the arm's trees for which both i and j were out of bag.
std::vector<double> pairwise_forest_mse(const ContrastDataset& ds,
                                        const ArmForests& forests, int arm) {
  const std::size_t n = ds.n();
  const BootstrapCounts& counts = forests.counts();
  const Eigen::Index trees = static_cast<Eigen::Index>(counts.trees());
  std::vector<std::size_t> members;
  for (std::size_t j = 0; j < n; ++j) {
    if (ds.unit(j).z == arm) members.push_back(j);
  }
  std::vector<double> mse(n, kNaN);
  if (members.empty()) return mse;

  const Eigen::Index m = static_cast<Eigen::Index>(members.size());
  Eigen::MatrixXd oob(trees, static_cast<Eigen::Index>(n));
  for (Eigen::Index t = 0; t < trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      oob(t, static_cast<Eigen::Index>(i)) =
          counts.out_of_bag(static_cast<std::size_t>(t), i) ? 1.0 : 0.0;
    }
  }
  Eigen::MatrixXd mask(trees, m), weighted(trees, m);
  const Eigen::MatrixXd& pred = forests.predictions(arm);
  for (Eigen::Index t = 0; t < trees; ++t) {
    const bool present = forests.present(arm, static_cast<std::size_t>(t));
    for (Eigen::Index c = 0; c < m; ++c) {
      const Eigen::Index j = static_cast<Eigen::Index>(members[static_cast<std::size_t>(c)]);
      const double on = present ? oob(t, j) : 0.0;
      mask(t, c) = on;
      weighted(t, c) = on > 0.0 ? pred(t, j) : 0.0;
    }
  }
  const Eigen::MatrixXd num = oob.transpose() * weighted;
  const Eigen::MatrixXd den = oob.transpose() * mask;

  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    std::size_t count = 0;
    for (Eigen::Index c = 0; c < m; ++c) {
      const std::size_t j = members[static_cast<std::size_t>(c)];
      if (j == i) continue;
      const Eigen::Index ii = static_cast<Eigen::Index>(i);
      double pred_j;
      if (den(ii, c) > 0.0) {
        pred_j = num(ii, c) / den(ii, c);
      } else {
        pred_j = fallback_mean(ds, [&](std::size_t k) { return ds.unit(k).z == arm; }, i, j);
      }
      const double yj = ds.unit(j).y;
      sq += (pred_j - yj) * (pred_j - yj);
      ++count;
    }
    if (count > 0) mse[i] = sq / static_cast<double>(count);
  }
  return mse;
}

}  // namespace

LooImputation impute_zero(const ContrastDataset& ds) {
  return finalize(ds, std::vector<double>(ds.n(), 0.0),
                  std::vector<double>(ds.n(), 0.0), "Zero");
}

LooImputation impute_fixed_remnant(const ContrastDataset& ds) {
  require_remnant(ds, "impute_fixed_remnant");
  std::vector<double> r(ds.n());
  for (std::size_t i = 0; i < ds.n(); ++i) r[i] = *ds.unit(i).yhat_r;
  return finalize(ds, r, r, "FixedRemnant");
}

LooImputation impute_loo_ols(const ContrastDataset& ds, SizeCheck check) {
  require_remnant(ds, "impute_loo_ols");
  if (check == SizeCheck::Strict) require_arm_sizes(ds, 3, "impute_loo_ols");
  std::vector<double> yhat0, yhat1;
  loo_ols_predictions(ds, yhat0, yhat1);
  return finalize(ds, std::move(yhat0), std::move(yhat1), "LooOls");
}

LooImputation impute_loo_forest(const ContrastDataset& ds, const ForestParams& params,
                                ForestFeatures features, SizeCheck check) {
  if (check == SizeCheck::Strict) {
    require_arm_sizes(ds, forest_min_arm(params), "impute_loo_forest");
  }
  const ArmForests forests = grow_arm_forests(ds, params, features);
  std::vector<double> yhat0, yhat1;
  loo_forest_predictions(ds, forests, yhat0, yhat1);
  return finalize(ds, std::move(yhat0), std::move(yhat1), "LooForest");
}

double EnsembleDiagnostics::forest_share() const {
  if (choice0.empty()) return 0.0;
  std::size_t forest = 0;
  for (std::size_t i = 0; i < choice0.size(); ++i) {
    forest += choice0[i] == Candidate::Forest;
    forest += choice1[i] == Candidate::Forest;
  }
  return static_cast<double>(forest) / static_cast<double>(2 * choice0.size());
}

EnsembleDiagnostics impute_ensemble_with_diagnostics(const ContrastDataset& ds,
                                                     const ForestParams& params,
                                                     SizeCheck check) {
  require_remnant(ds, "impute_ensemble");
  if (check == SizeCheck::Strict) {
    require_arm_sizes(ds, forest_min_arm(params), "impute_ensemble");
  }
  std::vector<double> ols0, ols1, rf0, rf1;
  loo_ols_predictions(ds, ols0, ols1);
  const ArmForests forests =
      grow_arm_forests(ds, params, ForestFeatures::CovariatesAndRemnant);
  loo_forest_predictions(ds, forests, rf0, rf1);

  EnsembleDiagnostics d;
  d.ols_mse0 = pairwise_ols_mse(ds, 0);
  d.ols_mse1 = pairwise_ols_mse(ds, 1);
  d.forest_mse0 = pairwise_forest_mse(ds, forests, 0);
  d.forest_mse1 = pairwise_forest_mse(ds, forests, 1);

  const std::size_t n = ds.n();
  std::vector<double> yhat0(n), yhat1(n);
  d.choice0.resize(n);
  d.choice1.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    // A NaN score (no other unit in the arm) compares false: OLS wins.
    d.choice0[i] = d.forest_mse0[i] < d.ols_mse0[i] ? Candidate::Forest : Candidate::Ols;
    d.choice1[i] = d.forest_mse1[i] < d.ols_mse1[i] ? Candidate::Forest : Candidate::Ols;
    yhat0[i] = d.choice0[i] == Candidate::Forest ? rf0[i] : ols0[i];
    yhat1[i] = d.choice1[i] == Candidate::Forest ? rf1[i] : ols1[i];
  }
  d.imputation = finalize(ds, std::move(yhat0), std::move(yhat1), "Ensemble");
  return d;
}

LooImputation impute_ensemble(const ContrastDataset& ds, const ForestParams& params,
                              SizeCheck check) {
  return impute_ensemble_with_diagnostics(ds, params, check).imputation;
}

LooImputation impute(const ContrastDataset& ds, const ImputerSpec& spec, SizeCheck check) {
  const bool needs_forest =
      spec.kind == ImputerKind::LooForest || spec.kind == ImputerKind::Ensemble;
  if (needs_forest != spec.forest.has_value()) {
    throw PreconditionError(std::string("impute: forest parameters must be given exactly for "
                                        "LooForest and Ensemble, got kind ") +
                            std::string(to_string(spec.kind)));
  }
  switch (spec.kind) {
    case ImputerKind::Zero: return impute_zero(ds);
    case ImputerKind::FixedRemnant: return impute_fixed_remnant(ds);
    case ImputerKind::LooOls: return impute_loo_ols(ds, check);
    case ImputerKind::LooForest: return impute_loo_forest(ds, *spec.forest, spec.features, check);
    case ImputerKind::Ensemble: return impute_ensemble(ds, *spec.forest, check);
  }
  throw PreconditionError("impute: unknown imputer kind");
}

}  // namespace reloop
