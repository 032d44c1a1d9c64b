#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fdr_oracle.hpp"
#include "reloop/errors.hpp"
#include "reloop/inference.hpp"

using namespace reloop;
using reloop::testing::brute_step_up;

namespace {

EffectEstimate est(double tau, double var) {
  EffectEstimate e;
  e.tau_hat = tau;
  e.var_hat = var;
  return e;
}

}  // namespace

TEST(Normal, KnownValues) {
  EXPECT_NEAR(normal_cdf(0.0), 0.5, 1e-15);
  EXPECT_NEAR(normal_cdf(1.959963984540054), 0.975, 1e-12);
  EXPECT_NEAR(normal_cdf(-3.0), 0.0013498980316300946, 1e-15);
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-15);
}

TEST(Normal, QuantileInvertsCdf) {
  for (double x = -6.0; x <= 6.0; x += 0.37) {
    EXPECT_NEAR(normal_quantile(normal_cdf(x)), x, 1e-9 * std::max(1.0, std::abs(x)));
  }
}

TEST(ZInference, NullEstimate) {
  const auto r = z_inference(est(0.0, 1.0), 0.05);
  EXPECT_NEAR(r.p_value, 1.0, 1e-12);
  EXPECT_NEAR(r.ci_lo, -1.96, 1e-3);
  EXPECT_NEAR(r.ci_hi, 1.96, 1e-3);
  EXPECT_EQ(r.se, 1.0);
}

TEST(ZInference, BoundaryEstimate) {
  EXPECT_NEAR(z_inference(est(1.96, 1.0), 0.05).p_value, 0.05, 1e-3);
}

TEST(ZInference, ZeroStandardError) {
  EXPECT_EQ(z_inference(est(0.0, 0.0)).p_value, 1.0);
  EXPECT_EQ(z_inference(est(0.2, 0.0)).p_value, 0.0);
  const auto r = z_inference(est(0.2, 0.0));
  EXPECT_EQ(r.ci_lo, 0.2);
  EXPECT_EQ(r.ci_hi, 0.2);
}

TEST(ZInference, IntervalContainsEstimate) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> N(0.0, 3.0);
  for (int i = 0; i < 200; ++i) {
    const auto r = z_inference(est(N(rng), std::abs(N(rng))), 0.1);
    EXPECT_LE(r.ci_lo, r.estimate.tau_hat);
    EXPECT_GE(r.ci_hi, r.estimate.tau_hat);
    EXPECT_GE(r.p_value, 0.0);
    EXPECT_LE(r.p_value, 1.0);
    EXPECT_EQ(r.se, std::sqrt(r.estimate.var_hat));
  }
}

TEST(BhAdjust, AllRejected) {
  const std::vector<double> p = {0.01, 0.02, 0.03, 0.04};
  const auto r = bh_adjust(p, 0.05);
  EXPECT_EQ(r.rejections(), 4u);
  for (double a : r.adjusted) EXPECT_NEAR(a, 0.04, 1e-15);
}

TEST(BhAdjust, Empty) {
  const auto r = bh_adjust({}, 0.05);
  EXPECT_TRUE(r.rejected.empty());
  EXPECT_TRUE(r.adjusted.empty());
}

TEST(BhAdjust, AllOnes) {
  const std::vector<double> p(5, 1.0);
  const auto r = bh_adjust(p, 0.05);
  EXPECT_EQ(r.rejections(), 0u);
  for (double a : r.adjusted) EXPECT_EQ(a, 1.0);
}

TEST(ByAdjust, SingleTestEqualsBh) {
  const std::vector<double> p = {0.03};
  EXPECT_EQ(by_adjust(p, 0.05).adjusted, bh_adjust(p, 0.05).adjusted);
  EXPECT_EQ(by_adjust(p, 0.05).rejected, bh_adjust(p, 0.05).rejected);
}

TEST(ByAdjust, HarmonicConstantBlocksRejections) {
  const std::vector<double> p = {0.01, 0.02, 0.03, 0.04};
  const auto r = by_adjust(p, 0.05);
  EXPECT_EQ(r.rejections(), 0u);
  EXPECT_NEAR(r.adjusted[0], 0.04 * 25.0 / 12.0, 1e-15);
}

TEST(Fdr, MatchesBruteForce) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t m = 1 + rng() % 50;
    std::vector<double> p(m);
    for (auto& v : p) {
      // Mix of tiny, tied and uniform values.
      const double u = U(rng);
      v = u < 0.3 ? U(rng) * 0.01 : (u < 0.4 ? 0.02 : U(rng));
    }
    for (bool yek : {false, true}) {
      const auto got = yek ? by_adjust(p, 0.05) : bh_adjust(p, 0.05);
      const auto want = brute_step_up(p, 0.05, yek);
      EXPECT_EQ(got.rejected, want.rejected);
      for (std::size_t i = 0; i < m; ++i) EXPECT_NEAR(got.adjusted[i], want.adjusted[i], 1e-15);
    }
  }
}

TEST(Fdr, AdjustedMonotoneAndAboveRaw) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.0, 0.2);
  std::vector<double> p(40);
  for (auto& v : p) v = U(rng);
  for (const auto& r : {bh_adjust(p, 0.05), by_adjust(p, 0.05)}) {
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
    for (std::size_t k = 0; k < p.size(); ++k) {
      EXPECT_GE(r.adjusted[order[k]], p[order[k]]);
      if (k > 0) EXPECT_GE(r.adjusted[order[k]], r.adjusted[order[k - 1]]);
      EXPECT_EQ(r.rejected[order[k]], r.adjusted[order[k]] <= 0.05);
    }
  }
}

TEST(Fdr, PermutationEquivariant) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(0.0, 0.1);
  std::vector<double> p(25);
  for (auto& v : p) v = U(rng);
  std::vector<std::size_t> perm(p.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<double> q(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) q[i] = p[perm[i]];
  const auto a = bh_adjust(p, 0.05), b = bh_adjust(q, 0.05);
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(b.adjusted[i], a.adjusted[perm[i]]);
    EXPECT_EQ(b.rejected[i], a.rejected[perm[i]]);
  }
}

TEST(Fdr, YekutieliSubsetOfHochberg) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.0, 0.05);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> p(1 + rng() % 30);
    for (auto& v : p) v = U(rng);
    const auto bh = bh_adjust(p, 0.05), by = by_adjust(p, 0.05);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (by.rejected[i]) EXPECT_TRUE(bh.rejected[i]);
    }
  }
}

TEST(VarianceRatio, Values) {
  EXPECT_DOUBLE_EQ(variance_ratio(0.02, 0.01), 2.0);
  EXPECT_DOUBLE_EQ(variance_ratio(0.3, 0.3), 1.0);
  EXPECT_THROW(variance_ratio(0.3, 0.0), PreconditionError);
}
