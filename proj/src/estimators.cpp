#include "reloop/estimators.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <Eigen/Dense>

#include "reloop/errors.hpp"
#include "stats_internal.hpp"

namespace reloop {

std::string_view to_string(EstimatorId id) {
  switch (id) {
    case EstimatorId::TTest: return "TTest";
    case EstimatorId::Rebar: return "Rebar";
    case EstimatorId::AncovaOls: return "AncovaOls";
    case EstimatorId::LoopX: return "Loop_x";
    case EstimatorId::ReLoop: return "ReLoop";
    case EstimatorId::ReLoopPlus: return "ReLoopPlus";
  }
  return "Unknown";
}

std::optional<EstimatorId> parse_estimator_id(std::string_view name) {
  for (EstimatorId id : all_estimators()) {
    if (to_string(id) == name) return id;
  }
  if (name == "LoopX") return EstimatorId::LoopX;
  return std::nullopt;
}

const std::vector<EstimatorId>& all_estimators() {
  static const std::vector<EstimatorId> ids = {
      EstimatorId::TTest, EstimatorId::Rebar,  EstimatorId::AncovaOls,
      EstimatorId::LoopX, EstimatorId::ReLoop, EstimatorId::ReLoopPlus};
  return ids;
}

namespace {

EffectEstimate base_estimate(const ContrastDataset& ds, EstimatorId id) {
  EffectEstimate e;
  e.estimator = id;
  e.n = ds.n();
  e.n1 = ds.n_treated();
  e.n0 = ds.n_control();
  e.p = ds.p();
  return e;
}

// Difference in arm means of `values` with the Welch variance.
template <typename Value>
EffectEstimate two_sample(const ContrastDataset& ds, EstimatorId id, Value value,
                          const char* who) {
  EffectEstimate e = base_estimate(ds, id);
  if (e.n1 == 0 || e.n0 == 0) {
    throw PreconditionError(std::string(who) + ": contrast " + ds.contrast_id() +
                            " has an empty arm");
  }
  if (e.n1 < 2 || e.n0 < 2) {
    throw PreconditionError(std::string(who) + ": contrast " + ds.contrast_id() +
                            " needs two units per arm for a variance");
  }
  std::vector<double> treated, control;
  treated.reserve(e.n1);
  control.reserve(e.n0);
  for (const auto& u : ds.units()) {
    (u.z == 1 ? treated : control).push_back(value(u));
  }
  e.tau_hat = detail::mean(treated) - detail::mean(control);
  e.var_hat = detail::sample_variance(treated) / static_cast<double>(e.n1) +
              detail::sample_variance(control) / static_cast<double>(e.n0);
  return e;
}

void require_remnant(const ContrastDataset& ds, const char* who) {
  if (!ds.has_remnant()) {
    throw PreconditionError(std::string(who) + ": contrast " + ds.contrast_id() +
                            " lacks remnant predictions");
  }
}

}  // namespace

EffectEstimate diff_in_means(const ContrastDataset& ds) {
  return two_sample(ds, EstimatorId::TTest, [](const UnitRecord& u) { return u.y; },
                    "diff_in_means");
}

EffectEstimate rebar(const ContrastDataset& ds) {
  require_remnant(ds, "rebar");
  return two_sample(ds, EstimatorId::Rebar,
                    [](const UnitRecord& u) { return u.y - *u.yhat_r; }, "rebar");
}

EffectEstimate ancova_ols(const ContrastDataset& ds) {
  require_remnant(ds, "ancova_ols");
  if (ds.n() < 4) {
    throw PreconditionError("ancova_ols: contrast " + ds.contrast_id() +
                            " needs at least 4 units");
  }
  const double first = *ds.unit(0).yhat_r;
  const bool constant = std::all_of(ds.units().begin(), ds.units().end(),
                                    [&](const UnitRecord& u) { return *u.yhat_r == first; });
  if (constant) {
    EffectEstimate e = diff_in_means(ds);
    e.estimator = EstimatorId::AncovaOls;
    return e;
  }

  const Eigen::Index n = static_cast<Eigen::Index>(ds.n());
  std::vector<double> r(ds.n());
  for (std::size_t i = 0; i < ds.n(); ++i) r[i] = *ds.unit(i).yhat_r;
  const double r_mean = detail::mean(r);
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& u = ds.unit(static_cast<std::size_t>(i));
    X(i, 0) = 1.0;
    X(i, 1) = r[static_cast<std::size_t>(i)] - r_mean;
    X(i, 2) = u.z;
    y(i) = u.y;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < 3) {
    throw PreconditionError("ancova_ols: design (1, yhat_r, z) is rank deficient in contrast " +
                            ds.contrast_id());
  }
  const Eigen::Vector3d beta = qr.solve(y);
  const Eigen::Matrix3d bread = (X.transpose() * X).inverse();
  const Eigen::VectorXd resid = y - X * beta;
  Eigen::Matrix3d meat = Eigen::Matrix3d::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d xi = X.row(i).transpose();
    const double h = xi.dot(bread * xi);
    if (!(1.0 - h > 1e-12)) {
      throw PreconditionError("ancova_ols: unit with leverage 1 in contrast " +
                              ds.contrast_id() + "; HC2 variance undefined");
    }
    meat += (resid(i) * resid(i) / (1.0 - h)) * xi * xi.transpose();
  }
  const Eigen::Matrix3d cov = bread * meat * bread;

  EffectEstimate e = base_estimate(ds, EstimatorId::AncovaOls);
  e.tau_hat = beta(2);
  e.var_hat = std::max(0.0, cov(2, 2));
  return e;
}

double loop_variance(const LooImputation& imp, std::size_t n, double p) {
  const double nn = static_cast<double>(n);
  return (p / (1.0 - p) * imp.e0_sq + (1.0 - p) / p * imp.e1_sq +
          2.0 * std::sqrt(imp.e0_sq * imp.e1_sq)) /
         nn;
}

EffectEstimate loop_point(const ContrastDataset& ds, const LooImputation& imp,
                          EstimatorId id) {
  if (imp.mhat.size() != ds.n() || imp.yhat0.size() != ds.n() ||
      imp.yhat1.size() != ds.n()) {
    throw PreconditionError("loop_point: imputation length does not match contrast " +
                            ds.contrast_id());
  }
  if (ds.empty()) throw PreconditionError("loop_point: empty contrast");
  const double n = static_cast<double>(ds.n());
  const double p = ds.p();
  double treated = 0.0, control = 0.0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto& u = ds.unit(i);
    (u.z == 1 ? treated : control) += u.y - imp.mhat[i];
  }
  EffectEstimate e = base_estimate(ds, id);
  e.tau_hat = treated / (n * p) - control / (n * (1.0 - p));
  e.var_hat = loop_variance(imp, ds.n(), p);
  return e;
}

EffectEstimate run_estimator(const ContrastDataset& ds, EstimatorId id,
                             const ForestParams& forest, SizeCheck check) {
  switch (id) {
    case EstimatorId::TTest: return diff_in_means(ds);
    case EstimatorId::Rebar: return rebar(ds);
    case EstimatorId::AncovaOls: return ancova_ols(ds);
    case EstimatorId::LoopX:
      return loop_point(ds, impute_loo_forest(ds, forest, ForestFeatures::Covariates, check), id);
    case EstimatorId::ReLoop:
      return loop_point(ds, impute_loo_ols(ds, check), id);
    case EstimatorId::ReLoopPlus:
      return loop_point(ds, impute_ensemble(ds, forest, check), id);
  }
  throw PreconditionError("run_estimator: unknown estimator");
}

std::vector<EstimatorOutcome> estimate_all(const ContrastDataset& ds,
                                           const EstimationPlan& plan) {
  std::vector<EstimatorOutcome> out;
  for (EstimatorId id : all_estimators()) {
    if (std::find(plan.estimators.begin(), plan.estimators.end(), id) ==
        plan.estimators.end()) {
      continue;
    }
    EstimatorOutcome o;
    o.estimator = id;
    try {
      o.estimate = run_estimator(ds, id, plan.forest);
    } catch (const Error& err) {
      o.skip_reason = err.what();
    }
    out.push_back(std::move(o));
  }
  return out;
}

}  // namespace reloop
