#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "loo_oracle.hpp"
#include "reloop/errors.hpp"
#include "reloop/imputers.hpp"
#include "support.hpp"

using namespace reloop;
using reloop::testing::loo_refit;
using reloop::testing::make_ds;
using reloop::testing::random_ds;

namespace {

ContrastDataset with_outcome(const ContrastDataset& ds, std::size_t i, double y, int z) {
  std::vector<UnitRecord> units(ds.units().begin(), ds.units().end());
  units[i].y = y;
  units[i].z = z;
  return ContrastDataset(ds.contrast_id(), units, ds.p(), ds.covariate_names());
}

ContrastDataset reversed(const ContrastDataset& ds) {
  std::vector<UnitRecord> units(ds.units().rbegin(), ds.units().rend());
  return ContrastDataset(ds.contrast_id(), units, ds.p(), ds.covariate_names());
}

void expect_mhat_identity(const LooImputation& imp, double p) {
  for (std::size_t i = 0; i < imp.mhat.size(); ++i) {
    EXPECT_EQ(imp.mhat[i], p * imp.yhat0[i] + (1.0 - p) * imp.yhat1[i]);
  }
}

ForestParams small_forest(std::size_t trees = 30, std::uint64_t seed = 7) {
  ForestParams f;
  f.trees = trees;
  f.seed = seed;
  f.min_leaf = 3;
  return f;
}

}  // namespace

TEST(ImputeZero, AllZero) {
  std::mt19937_64 rng(1);
  const auto ds = random_ds(rng, 12, 1);
  const auto imp = impute_zero(ds);
  for (double v : imp.mhat) EXPECT_EQ(v, 0.0);
  for (double v : imp.yhat0) EXPECT_EQ(v, 0.0);
  for (double v : imp.yhat1) EXPECT_EQ(v, 0.0);
}

TEST(ImputeZero, ZeroOutcomesGiveZeroErrors) {
  const auto imp = impute_zero(make_ds({0, 0, 0, 0}, {1, 0, 1, 0}));
  EXPECT_EQ(imp.e0_sq, 0.0);
  EXPECT_EQ(imp.e1_sq, 0.0);
}

TEST(ImputeZero, HandArithmetic) {
  const auto imp = impute_zero(make_ds({1, 1, 2}, {0, 0, 1}));
  EXPECT_DOUBLE_EQ(imp.e0_sq, 1.0);
  EXPECT_DOUBLE_EQ(imp.e1_sq, 4.0);
}

TEST(ImputeFixedRemnant, Passthrough) {
  const auto imp = impute_fixed_remnant(make_ds({1, 0}, {1, 0}, {0.2, 0.8}));
  EXPECT_DOUBLE_EQ(imp.mhat[0], 0.2);
  EXPECT_DOUBLE_EQ(imp.mhat[1], 0.8);
  EXPECT_DOUBLE_EQ(imp.yhat0[1], 0.8);
  EXPECT_DOUBLE_EQ(imp.yhat1[0], 0.2);
}

TEST(ImputeFixedRemnant, PerfectPredictor) {
  const std::vector<double> y = {0.3, 1.2, -0.4, 2.0};
  const auto imp = impute_fixed_remnant(make_ds(y, {1, 0, 1, 0}, y));
  EXPECT_EQ(imp.e0_sq, 0.0);
  EXPECT_EQ(imp.e1_sq, 0.0);
}

TEST(ImputeFixedRemnant, NeedsPredictions) {
  EXPECT_THROW(impute_fixed_remnant(make_ds({1, 0}, {1, 0})), PreconditionError);
}

TEST(ImputeLooOls, PerfectCollinearFit) {
  const std::vector<double> y = {0.1, 1.7, -0.3, 2.2, 0.9, -1.4, 3.1, 0.4};
  const auto ds = make_ds(y, {1, 1, 1, 1, 0, 0, 0, 0}, y);
  const auto imp = impute_loo_ols(ds);
  for (std::size_t i = 0; i < y.size(); ++i) {
    EXPECT_NEAR(imp.yhat0[i], y[i], 1e-12);
    EXPECT_NEAR(imp.yhat1[i], y[i], 1e-12);
  }
  EXPECT_NEAR(imp.e0_sq, 0.0, 1e-20);
  EXPECT_NEAR(imp.e1_sq, 0.0, 1e-20);
}

TEST(ImputeLooOls, ConstantRegressorFallsBackToArmMean) {
  const std::vector<double> y = {1, 2, 4, 10, 20, 30};
  const std::vector<int> z = {1, 1, 1, 0, 0, 0};
  const auto ds = make_ds(y, z, {5, 5, 5, 5, 5, 5});
  const auto imp = impute_loo_ols(ds);
  EXPECT_DOUBLE_EQ(imp.yhat1[0], 3.0);
  EXPECT_DOUBLE_EQ(imp.yhat1[3], 7.0 / 3.0);
  EXPECT_DOUBLE_EQ(imp.yhat0[3], 25.0);
  EXPECT_DOUBLE_EQ(imp.yhat0[0], 20.0);
}

TEST(ImputeLooOls, MatchesExplicitRefits) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 25; ++rep) {
    const auto ds = random_ds(rng, 20, 1);
    const auto imp = impute_loo_ols(ds);
    for (std::size_t i = 0; i < ds.n(); ++i) {
      EXPECT_NEAR(imp.yhat0[i], loo_refit(ds, i, 0), 1e-8);
      EXPECT_NEAR(imp.yhat1[i], loo_refit(ds, i, 1), 1e-8);
    }
  }
}

TEST(ImputeLooOls, MatchesRefitsWithTiedRegressors) {
  // Two distinct regressor values per arm: removing one unit can leave a
  // single value and force the mean fallback.
  const std::vector<double> r = {0, 0, 1, 0, 1, 1, 2, 2};
  const std::vector<double> y = {0.5, 0.1, 1.3, 0.7, 2.2, 1.9, 3.0, 2.5};
  const std::vector<int> z = {1, 1, 1, 0, 0, 0, 0, 1};
  const auto ds = make_ds(y, z, r);
  const auto imp = impute_loo_ols(ds, SizeCheck::Total);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    EXPECT_NEAR(imp.yhat0[i], loo_refit(ds, i, 0), 1e-10) << i;
    EXPECT_NEAR(imp.yhat1[i], loo_refit(ds, i, 1), 1e-10) << i;
  }
}

TEST(ImputeLooOls, TotalModeOnTinyArms) {
  const auto ds = make_ds({1.0, 2.0, 3.0}, {1, 1, 1}, {0.1, 0.5, 0.9});
  const auto imp = impute_loo_ols(ds, SizeCheck::Total);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    EXPECT_NEAR(imp.yhat0[i], loo_refit(ds, i, 0), 1e-12);
    EXPECT_NEAR(imp.yhat1[i], loo_refit(ds, i, 1), 1e-12);
  }
  const auto single = make_ds({4.0}, {0}, {1.0});
  const auto s = impute_loo_ols(single, SizeCheck::Total);
  EXPECT_EQ(s.yhat0[0], 0.0);
  EXPECT_EQ(s.yhat1[0], 0.0);
}

TEST(ImputeLooOls, StrictModeRejectsSmallArms) {
  const auto ds = make_ds({1, 2, 3, 4, 5}, {1, 1, 0, 0, 0}, {1, 2, 3, 4, 5});
  EXPECT_THROW(impute_loo_ols(ds), PreconditionError);
}

TEST(ImputeLooOls, OwnPredictionIgnoresOwnOutcome) {
  std::mt19937_64 rng(13);
  const auto ds = random_ds(rng, 15, 1);
  const auto base = impute_loo_ols(ds);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto imp = impute_loo_ols(with_outcome(ds, i, ds.unit(i).y + 17.0, ds.unit(i).z));
    EXPECT_NEAR(imp.yhat0[i], base.yhat0[i], 1e-10);
    EXPECT_NEAR(imp.yhat1[i], base.yhat1[i], 1e-10);
  }
}

TEST(ImputeLooOls, OwnPredictionIgnoresOwnAssignment) {
  std::mt19937_64 rng(17);
  const auto ds = random_ds(rng, 16, 1, 0.5, 4);
  const auto base = impute_loo_ols(ds);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto imp =
        impute_loo_ols(with_outcome(ds, i, -3.0, 1 - ds.unit(i).z), SizeCheck::Total);
    EXPECT_NEAR(imp.yhat0[i], base.yhat0[i], 1e-10);
    EXPECT_NEAR(imp.yhat1[i], base.yhat1[i], 1e-10);
  }
}

TEST(ImputeLooOls, ErrorsInvariantToUnitOrder) {
  std::mt19937_64 rng(19);
  const auto ds = random_ds(rng, 25, 1);
  const auto a = impute_loo_ols(ds);
  const auto b = impute_loo_ols(reversed(ds));
  EXPECT_NEAR(a.e0_sq, b.e0_sq, 1e-12);
  EXPECT_NEAR(a.e1_sq, b.e1_sq, 1e-12);
}

TEST(ImputeLooOls, MhatIdentityHolds) {
  std::mt19937_64 rng(23);
  const auto ds = random_ds(rng, 20, 1, 0.3);
  expect_mhat_identity(impute_loo_ols(ds), ds.p());
}

TEST(ImputeLooForest, ConstantOutcomes) {
  std::vector<double> y(20, 2.5), r(20);
  std::vector<int> z(20);
  std::vector<std::vector<double>> x(20);
  for (std::size_t i = 0; i < 20; ++i) {
    z[i] = i % 2;
    r[i] = 0.1 * static_cast<double>(i);
    x[i] = {std::sin(static_cast<double>(i))};
  }
  const auto imp = impute_loo_forest(make_ds(y, z, r, x), small_forest());
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(imp.yhat0[i], 2.5);
    EXPECT_EQ(imp.yhat1[i], 2.5);
  }
  EXPECT_EQ(imp.e0_sq, 0.0);
  EXPECT_EQ(imp.e1_sq, 0.0);
}

TEST(ImputeLooForest, DepthZeroMatchesOutOfBagMeans) {
  std::mt19937_64 rng(29);
  const auto ds = random_ds(rng, 18, 2);
  ForestParams f = small_forest(40, 99);
  f.max_depth = 0;
  const auto imp = impute_loo_forest(ds, f);
  const BootstrapCounts counts(f.seed, f.trees, ds.n());
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (int arm = 0; arm < 2; ++arm) {
      double sum = 0.0;
      std::size_t used = 0;
      for (std::size_t t = 0; t < f.trees; ++t) {
        if (counts.count(t, i) != 0) continue;
        double num = 0.0, den = 0.0;
        for (std::size_t j = 0; j < ds.n(); ++j) {
          if (ds.unit(j).z != arm) continue;
          num += counts.count(t, j) * ds.unit(j).y;
          den += counts.count(t, j);
        }
        if (den == 0.0) continue;
        sum += num / den;
        ++used;
      }
      ASSERT_GT(used, 0u);
      const double got = arm == 0 ? imp.yhat0[i] : imp.yhat1[i];
      EXPECT_NEAR(got, sum / static_cast<double>(used), 1e-12);
    }
  }
}

TEST(ImputeLooForest, InBagEverywhereFallsBackToArmMean) {
  // With one tree, units drawn into its bootstrap sample have no out-of-bag
  // tree and take the leave-i-out arm mean.
  std::mt19937_64 rng(31);
  const auto ds = random_ds(rng, 16, 1);
  ForestParams f = small_forest(1, 5);
  const auto imp = impute_loo_forest(ds, f, ForestFeatures::CovariatesAndRemnant,
                                     SizeCheck::Total);
  const BootstrapCounts counts(f.seed, 1, ds.n());
  std::size_t checked = 0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    if (counts.count(0, i) == 0) continue;
    for (int arm = 0; arm < 2; ++arm) {
      double s = 0.0;
      std::size_t m = 0;
      for (std::size_t j = 0; j < ds.n(); ++j) {
        if (j != i && ds.unit(j).z == arm) {
          s += ds.unit(j).y;
          ++m;
        }
      }
      EXPECT_NEAR(arm == 0 ? imp.yhat0[i] : imp.yhat1[i], s / static_cast<double>(m), 1e-12);
      ++checked;
    }
  }
  EXPECT_GT(checked, 0u);
}

TEST(ImputeLooForest, DeterministicForSeed) {
  std::mt19937_64 rng(37);
  const auto ds = random_ds(rng, 30, 3);
  const auto a = impute_loo_forest(ds, small_forest(25, 3));
  const auto b = impute_loo_forest(ds, small_forest(25, 3));
  EXPECT_EQ(a.yhat0, b.yhat0);
  EXPECT_EQ(a.yhat1, b.yhat1);
  EXPECT_EQ(a.e0_sq, b.e0_sq);
  const auto c = impute_loo_forest(ds, small_forest(25, 4));
  EXPECT_NE(a.yhat0, c.yhat0);
}

TEST(ImputeLooForest, OwnPredictionIgnoresOwnOutcomeAndAssignment) {
  std::mt19937_64 rng(41);
  const auto ds = random_ds(rng, 24, 2, 0.5, 6);
  const ForestParams f = small_forest(20, 8);
  const auto base = impute_loo_forest(ds, f, ForestFeatures::CovariatesAndRemnant,
                                      SizeCheck::Total);
  for (std::size_t i = 0; i < ds.n(); i += 3) {
    const auto y_changed = impute_loo_forest(with_outcome(ds, i, 50.0, ds.unit(i).z), f,
                                             ForestFeatures::CovariatesAndRemnant,
                                             SizeCheck::Total);
    EXPECT_EQ(y_changed.yhat0[i], base.yhat0[i]);
    EXPECT_EQ(y_changed.yhat1[i], base.yhat1[i]);
    const auto z_changed = impute_loo_forest(with_outcome(ds, i, -9.0, 1 - ds.unit(i).z), f,
                                             ForestFeatures::CovariatesAndRemnant,
                                             SizeCheck::Total);
    EXPECT_EQ(z_changed.yhat0[i], base.yhat0[i]);
    EXPECT_EQ(z_changed.yhat1[i], base.yhat1[i]);
  }
}

TEST(ImputeLooForest, CovariatesOnlyNeedsNoRemnant) {
  std::mt19937_64 rng(43);
  const auto full = random_ds(rng, 20, 2);
  std::vector<UnitRecord> units(full.units().begin(), full.units().end());
  for (auto& u : units) u.yhat_r.reset();
  const ContrastDataset ds("c", units);
  EXPECT_NO_THROW(impute_loo_forest(ds, small_forest(), ForestFeatures::Covariates));
  EXPECT_THROW(impute_loo_forest(ds, small_forest(), ForestFeatures::CovariatesAndRemnant),
               PreconditionError);
}

TEST(ImputeLooForest, StrictModeRejectsSmallArms) {
  std::mt19937_64 rng(47);
  const auto ds = random_ds(rng, 8, 1, 0.5, 2);
  ForestParams f = small_forest();
  f.min_leaf = 7;
  EXPECT_THROW(impute_loo_forest(ds, f), PreconditionError);
}

TEST(ImputeEnsemble, PerfectOlsWinsEverywhere) {
  std::mt19937_64 rng(53);
  const auto base = random_ds(rng, 20, 2);
  std::vector<UnitRecord> units(base.units().begin(), base.units().end());
  for (auto& u : units) u.yhat_r = u.y;
  const ContrastDataset ds("c", units);
  const auto d = impute_ensemble_with_diagnostics(ds, small_forest());
  for (std::size_t i = 0; i < ds.n(); ++i) {
    EXPECT_EQ(d.choice0[i], Candidate::Ols);
    EXPECT_EQ(d.choice1[i], Candidate::Ols);
  }
  const auto ols = impute_loo_ols(ds);
  EXPECT_EQ(d.imputation.yhat0, ols.yhat0);
  EXPECT_EQ(d.imputation.yhat1, ols.yhat1);
}

TEST(ImputeEnsemble, IdenticalCandidatesTieToOls) {
  // Constant outcomes: both candidates predict the constant exactly.
  std::vector<double> y(16, 1.0), r(16);
  std::vector<int> z(16);
  std::vector<std::vector<double>> x(16);
  for (std::size_t i = 0; i < 16; ++i) {
    z[i] = i % 2;
    r[i] = static_cast<double>(i);
    x[i] = {static_cast<double>(i * i % 5)};
  }
  const auto d = impute_ensemble_with_diagnostics(make_ds(y, z, r, x), small_forest());
  for (std::size_t i = 0; i < 16; ++i) {
    EXPECT_EQ(d.choice0[i], Candidate::Ols);
    EXPECT_EQ(d.choice1[i], Candidate::Ols);
    EXPECT_EQ(d.imputation.yhat0[i], 1.0);
  }
}

TEST(ImputeEnsemble, ForestChosenForNonlinearOutcome) {
  // y depends on x through a step; yhat_r is pure noise.
  std::mt19937_64 rng(59);
  std::normal_distribution<double> N(0.0, 1.0);
  const std::size_t n = 30;
  std::vector<double> y(n), r(n);
  std::vector<int> z(n);
  std::vector<std::vector<double>> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = i % 2;
    const double xi = N(rng);
    x[i] = {xi};
    y[i] = (xi > 0 ? 4.0 : -4.0) + 0.05 * N(rng);
    r[i] = N(rng);
  }
  ForestParams f;
  f.trees = 200;
  f.min_leaf = 2;
  f.seed = 1;
  const auto d = impute_ensemble_with_diagnostics(make_ds(y, z, r, x), f);
  EXPECT_GT(d.forest_share(), 0.8);
}

TEST(ImputeEnsemble, SelectionIgnoresOwnOutcome) {
  std::mt19937_64 rng(61);
  const auto ds = random_ds(rng, 24, 2, 0.5, 6);
  const ForestParams f = small_forest(20, 2);
  const auto base = impute_ensemble_with_diagnostics(ds, f);
  for (std::size_t i = 0; i < ds.n(); i += 2) {
    const auto d = impute_ensemble_with_diagnostics(
        with_outcome(ds, i, ds.unit(i).y * 5 + 3, ds.unit(i).z), f);
    EXPECT_EQ(d.choice0[i], base.choice0[i]);
    EXPECT_EQ(d.choice1[i], base.choice1[i]);
    EXPECT_NEAR(d.imputation.yhat0[i], base.imputation.yhat0[i], 1e-10);
    EXPECT_NEAR(d.imputation.yhat1[i], base.imputation.yhat1[i], 1e-10);
  }
}

TEST(ImputeEnsemble, MhatIdentityHolds) {
  std::mt19937_64 rng(67);
  const auto ds = random_ds(rng, 20, 2, 0.3, 5);
  expect_mhat_identity(impute_ensemble(ds, small_forest()), ds.p());
}

TEST(Impute, DispatchChecksForestParameters) {
  std::mt19937_64 rng(71);
  const auto ds = random_ds(rng, 20, 1);
  EXPECT_THROW(impute(ds, ImputerSpec{ImputerKind::LooForest, std::nullopt}),
               PreconditionError);
  EXPECT_THROW(impute(ds, ImputerSpec{ImputerKind::Zero, small_forest()}), PreconditionError);
  EXPECT_EQ(impute(ds, ImputerSpec{ImputerKind::LooOls, std::nullopt}).yhat0,
            impute_loo_ols(ds).yhat0);
}
