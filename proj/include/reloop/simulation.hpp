#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "reloop/domain.hpp"
#include "reloop/estimators.hpp"
#include "reloop/imputers.hpp"
#include "reloop/remnant_model.hpp"

namespace reloop {

// Data-generating process for synthetic experiments. Covariates are iid
// N(0,1); the control outcome is
//
//   y0 = intercept + rho * (sqrt(1-w) L(x) + sqrt(w) N(x)) + sqrt(1-rho^2) e
//
// with L(x) = sum_j x_j / sqrt(k), N(x) = (x_1^2 - 1) / sqrt(2), e ~ N(0,1)
// and w = nonlinear_share, so corr(signal, y0) = rho. The unit effect is
//
//   tau_i = tau + tau_het * x_1 + group_effect_gap * [group == "G1"].
//
// Group "G1" is drawn with probability group_share_sample; the target
// population holds it in share group_share_population. The remnant is drawn
// from the same process with x_1 shifted by remnant_shift standard deviations,
// and a ridge model trained on it supplies the units' yhat_r.
struct ScenarioSpec {
  std::size_t n = 200;
  double p = 0.5;
  std::size_t k = 3;
  double rho = 0.7;
  double nonlinear_share = 0.0;
  double intercept = 0.0;
  double tau = 0.0;
  double tau_het = 0.0;
  double group_share_sample = 0.5;
  double group_share_population = 0.5;
  double group_effect_gap = 0.0;
  std::size_t remnant_size = 5000;
  double remnant_shift = 0.0;
  double remnant_lambda = 1.0;

  // Throws ConfigError describing the first invalid field.
  void validate() const;
};

// Full potential-outcome table of one finite experimental sample.
struct SyntheticPopulation {
  std::vector<double> y0;
  std::vector<double> y1;
  std::vector<std::vector<double>> x;
  std::vector<std::string> group;
  std::vector<double> yhat_r;  // empty when no remnant model was trained
  double p = 0.5;
  ScenarioSpec spec;

  std::size_t n() const { return y0.size(); }
  double sate() const;
  // Share of units in group "G1".
  double group_share() const;
  // Mean effect within one group.
  double group_effect(const std::string& label) const;
  // Effect in the target population: pi * tau_G1 + (1 - pi) * tau_G2 with
  // pi = spec.group_share_population and per-group effects as in the sample.
  double pate() const;

  // Observed dataset for assignment vector z (y = z ? y1 : y0).
  ContrastDataset observe(std::span<const int> z, const std::string& id = "sim") const;
};

struct RemnantSample {
  Eigen::MatrixXd features;
  Eigen::VectorXd outcomes;
};

struct SyntheticDraw {
  SyntheticPopulation population;
  RemnantSample remnant;
  std::optional<RemnantModel> model;
};

// Deterministic in (spec, seed).
SyntheticDraw gen_synthetic(const ScenarioSpec& spec, std::uint64_t seed);

// An estimator as seen by the oracles. min_arm_size > 0 restricts the oracle
// to assignments in which both arms hold at least that many units.
struct Pipeline {
  std::string name;
  std::function<EffectEstimate(const ContrastDataset&)> run;
  std::size_t min_arm_size = 0;
};

// loop_point composed with an imputer in SizeCheck::Total mode.
Pipeline loop_pipeline(const ImputerSpec& spec, std::string name = {});

// One of the named estimators. TTest and Rebar need two units per arm; the
// LOOP family runs in SizeCheck::Total mode.
Pipeline estimator_pipeline(EstimatorId id, const ForestParams& forest = {});

struct ExactMoments {
  double sate = 0.0;
  double mean_tau = 0.0;
  double var_tau = 0.0;
  double mean_var_hat = 0.0;
  // Probability of the assignments the moments condition on (1 unless the
  // pipeline sets min_arm_size).
  double mass = 1.0;
  std::size_t assignments = 0;
};

constexpr std::size_t kMaxEnumerationUnits = 14;

// Exact moments over all 2^n Bernoulli(p) assignment vectors, each weighted
// by p^n1 (1-p)^n0. Throws PreconditionError when n > kMaxEnumerationUnits.
// Results do not depend on `threads`.
ExactMoments exact_expectation(const SyntheticPopulation& pop, const Pipeline& pipeline,
                               unsigned threads = 1);

struct MonteCarloStats {
  std::string name;
  std::size_t replications = 0;  // successful ones
  std::size_t failures = 0;
  double mean_tau = 0.0;
  double bias = 0.0;
  double bias_se = 0.0;
  double emp_var = 0.0;
  double mean_var_hat = 0.0;
  double coverage = 0.0;
  double coverage_se = 0.0;
  // (baseline name, emp_var(baseline) / emp_var(this)); only for baselines
  // other than this pipeline and only when this variance is positive.
  std::vector<std::pair<std::string, double>> variance_ratios;
};

struct MonteCarloSummary {
  double sate = 0.0;
  std::size_t replications = 0;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  std::vector<MonteCarloStats> pipelines;

  const MonteCarloStats& at(const std::string& name) const;
};

// R independent Bernoulli(p) assignments of the fixed population. Replication
// r draws from stream (seed, r). Ratios are reported against every pipeline
// named in `baselines`. Results do not depend on `threads`.
MonteCarloSummary monte_carlo(const SyntheticPopulation& pop,
                              std::span<const Pipeline> pipelines, std::size_t replications,
                              std::uint64_t seed, double alpha = 0.05,
                              std::span<const std::string> baselines = {},
                              unsigned threads = 1);

}  // namespace reloop
