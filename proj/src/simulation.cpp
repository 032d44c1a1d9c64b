#include "reloop/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "reloop/errors.hpp"
#include "reloop/inference.hpp"
#include "reloop/parallel.hpp"
#include "reloop/rng.hpp"

namespace reloop {

namespace {

// Substream tags; stream index is 0 for population draws and the replication
// number for assignments.
constexpr std::uint64_t kPopulationSubstream = 100;
constexpr std::uint64_t kRemnantSubstream = 101;
constexpr std::uint64_t kAssignmentSubstream = 102;

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError("scenario: " + message);
}

}  // namespace

void ScenarioSpec::validate() const {
  require(n >= 1, "n must be at least 1");
  require(p > 0.0 && p < 1.0, "p must lie in (0,1)");
  require(k >= 1, "k must be at least 1");
  require(rho >= 0.0 && rho <= 1.0, "rho must lie in [0,1]");
  require(nonlinear_share >= 0.0 && nonlinear_share <= 1.0,
          "nonlinear_share must lie in [0,1]");
  require(group_share_sample >= 0.0 && group_share_sample <= 1.0,
          "group_share_sample must lie in [0,1]");
  require(group_share_population >= 0.0 && group_share_population <= 1.0,
          "group_share_population must lie in [0,1]");
  require(remnant_lambda >= 0.0, "remnant_lambda must be >= 0");
  require(remnant_size == 0 || remnant_lambda > 0.0 || remnant_size >= k + 2,
          "remnant_size must be at least k + 2 when remnant_lambda is 0");
  require(std::isfinite(intercept) && std::isfinite(tau) && std::isfinite(tau_het) &&
              std::isfinite(group_effect_gap) && std::isfinite(remnant_shift),
          "parameters must be finite");
}

double SyntheticPopulation::sate() const {
  double s = 0.0;
  for (std::size_t i = 0; i < n(); ++i) s += y1[i] - y0[i];
  return s / static_cast<double>(n());
}

double SyntheticPopulation::group_share() const {
  const auto g1 = std::count(group.begin(), group.end(), "G1");
  return static_cast<double>(g1) / static_cast<double>(n());
}

double SyntheticPopulation::group_effect(const std::string& label) const {
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n(); ++i) {
    if (group[i] != label) continue;
    s += y1[i] - y0[i];
    ++count;
  }
  if (count == 0) throw PreconditionError("group_effect: no units in group " + label);
  return s / static_cast<double>(count);
}

double SyntheticPopulation::pate() const {
  const double pi = spec.group_share_population;
  return pi * group_effect("G1") + (1.0 - pi) * group_effect("G2");
}

ContrastDataset SyntheticPopulation::observe(std::span<const int> z, const std::string& id) const {
  if (z.size() != n()) throw DataError("observe: assignment length differs from population size");
  std::vector<UnitRecord> units(n());
  for (std::size_t i = 0; i < n(); ++i) {
    UnitRecord& u = units[i];
    u.unit_id = "u" + std::to_string(i);
    u.z = z[i];
    u.y = z[i] == 1 ? y1[i] : y0[i];
    u.x = x[i];
    if (!yhat_r.empty()) u.yhat_r = yhat_r[i];
    u.group = group[i];
  }
  return ContrastDataset(id, std::move(units), p);
}

namespace {

struct UnitDraw {
  std::vector<double> x;
  double y0;
};

UnitDraw draw_unit(const ScenarioSpec& spec, Engine& rng, double shift) {
  std::normal_distribution<double> normal(0.0, 1.0);
  UnitDraw d;
  d.x.resize(spec.k);
  for (double& v : d.x) v = normal(rng);
  d.x[0] += shift;
  double linear = 0.0;
  for (double v : d.x) linear += v;
  linear /= std::sqrt(static_cast<double>(spec.k));
  const double nonlinear = (d.x[0] * d.x[0] - 1.0) / std::sqrt(2.0);
  const double w = spec.nonlinear_share;
  const double signal = std::sqrt(1.0 - w) * linear + std::sqrt(w) * nonlinear;
  const double noise_sd = std::sqrt(std::max(0.0, 1.0 - spec.rho * spec.rho));
  const double e = normal(rng);
  d.y0 = spec.intercept + spec.rho * signal + noise_sd * e;
  return d;
}

}  // namespace

SyntheticDraw gen_synthetic(const ScenarioSpec& spec, std::uint64_t seed) {
  spec.validate();
  SyntheticDraw draw;
  SyntheticPopulation& pop = draw.population;
  pop.spec = spec;
  pop.p = spec.p;

  Engine rng = make_stream(seed, 0, kPopulationSubstream);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t i = 0; i < spec.n; ++i) {
    const bool g1 = unif(rng) < spec.group_share_sample;
    UnitDraw d = draw_unit(spec, rng, 0.0);
    const double effect =
        spec.tau + spec.tau_het * d.x[0] + (g1 ? spec.group_effect_gap : 0.0);
    pop.y0.push_back(d.y0);
    pop.y1.push_back(d.y0 + effect);
    pop.x.push_back(std::move(d.x));
    pop.group.push_back(g1 ? "G1" : "G2");
  }

  if (spec.remnant_size > 0) {
    Engine rem_rng = make_stream(seed, 0, kRemnantSubstream);
    const Eigen::Index m = static_cast<Eigen::Index>(spec.remnant_size);
    const Eigen::Index k = static_cast<Eigen::Index>(spec.k);
    draw.remnant.features.resize(m, k);
    draw.remnant.outcomes.resize(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      UnitDraw d = draw_unit(spec, rem_rng, spec.remnant_shift);
      for (Eigen::Index j = 0; j < k; ++j) {
        draw.remnant.features(r, j) = d.x[static_cast<std::size_t>(j)];
      }
      draw.remnant.outcomes(r) = d.y0;
    }
    draw.model = train_remnant(draw.remnant.features, draw.remnant.outcomes,
                               spec.remnant_lambda);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(spec.n), k);
    for (std::size_t i = 0; i < spec.n; ++i) {
      for (Eigen::Index j = 0; j < k; ++j) {
        X(static_cast<Eigen::Index>(i), j) = pop.x[i][static_cast<std::size_t>(j)];
      }
    }
    const Eigen::VectorXd pred = predict_remnant(*draw.model, X);
    pop.yhat_r.assign(pred.data(), pred.data() + pred.size());
  }
  return draw;
}

Pipeline loop_pipeline(const ImputerSpec& spec, std::string name) {
  if (name.empty()) name = "Loop[" + std::string(to_string(spec.kind)) + "]";
  return Pipeline{std::move(name),
                  [spec](const ContrastDataset& ds) {
                    return loop_point(ds, impute(ds, spec, SizeCheck::Total));
                  },
                  0};
}

Pipeline estimator_pipeline(EstimatorId id, const ForestParams& forest) {
  const bool needs_two = id == EstimatorId::TTest || id == EstimatorId::Rebar ||
                         id == EstimatorId::AncovaOls;
  const std::size_t min_arm = needs_two ? 2 : 0;
  return Pipeline{std::string(to_string(id)),
                  [id, forest](const ContrastDataset& ds) {
                    return run_estimator(ds, id, forest, SizeCheck::Total);
                  },
                  min_arm};
}

ExactMoments exact_expectation(const SyntheticPopulation& pop, const Pipeline& pipeline,
                               unsigned threads) {
  const std::size_t n = pop.n();
  if (n == 0) throw PreconditionError("exact_expectation: empty population");
  if (n > kMaxEnumerationUnits) {
    throw PreconditionError("exact_expectation: n = " + std::to_string(n) +
                            " exceeds the enumeration budget of " +
                            std::to_string(kMaxEnumerationUnits) + " units");
  }
  const std::size_t total = std::size_t{1} << n;
  std::vector<double> tau(total, 0.0), vhat(total, 0.0);
  std::vector<char> included(total, 0);
  parallel_for(total, threads, [&](std::size_t mask) {
    std::vector<int> z(n);
    std::size_t n1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = static_cast<int>((mask >> i) & 1U);
      n1 += static_cast<std::size_t>(z[i]);
    }
    if (std::min(n1, n - n1) < pipeline.min_arm_size) return;
    const EffectEstimate e = pipeline.run(pop.observe(z));
    tau[mask] = e.tau_hat;
    vhat[mask] = e.var_hat;
    included[mask] = 1;
  });

  const double p = pop.p;
  auto weight = [&](std::size_t mask) {
    const int n1 = __builtin_popcountll(mask);
    return std::pow(p, n1) * std::pow(1.0 - p, static_cast<double>(n) - n1);
  };
  ExactMoments m;
  m.sate = pop.sate();
  double mass = 0.0, s_tau = 0.0, s_v = 0.0;
  for (std::size_t mask = 0; mask < total; ++mask) {
    if (!included[mask]) continue;
    const double w = weight(mask);
    mass += w;
    s_tau += w * tau[mask];
    s_v += w * vhat[mask];
    ++m.assignments;
  }
  if (!(mass > 0.0)) throw PreconditionError("exact_expectation: no admissible assignment");
  m.mass = mass;
  m.mean_tau = s_tau / mass;
  m.mean_var_hat = s_v / mass;
  double s_dev = 0.0;
  for (std::size_t mask = 0; mask < total; ++mask) {
    if (!included[mask]) continue;
    const double d = tau[mask] - m.mean_tau;
    s_dev += weight(mask) * d * d;
  }
  m.var_tau = s_dev / mass;
  return m;
}

const MonteCarloStats& MonteCarloSummary::at(const std::string& name) const {
  for (const auto& s : pipelines) {
    if (s.name == name) return s;
  }
  throw PreconditionError("MonteCarloSummary: no pipeline named " + name);
}

MonteCarloSummary monte_carlo(const SyntheticPopulation& pop,
                              std::span<const Pipeline> pipelines, std::size_t replications,
                              std::uint64_t seed, double alpha,
                              std::span<const std::string> baselines, unsigned threads) {
  if (replications == 0) throw PreconditionError("monte_carlo: need at least one replication");
  const std::size_t n = pop.n();
  const std::size_t P = pipelines.size();
  const double sate = pop.sate();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> tau(replications * P, nan), vhat(replications * P, nan);
  std::vector<char> covered(replications * P, 0);

  parallel_for(replications, threads, [&](std::size_t r) {
    Engine rng = make_stream(seed, r, kAssignmentSubstream);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<int> z(n);
    std::size_t n1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = unif(rng) < pop.p ? 1 : 0;
      n1 += static_cast<std::size_t>(z[i]);
    }
    const ContrastDataset ds = pop.observe(z, "rep" + std::to_string(r));
    for (std::size_t k = 0; k < P; ++k) {
      if (std::min(n1, n - n1) < pipelines[k].min_arm_size) continue;
      try {
        const EffectEstimate e = pipelines[k].run(ds);
        const InferenceResult inf = z_inference(e, alpha);
        tau[r * P + k] = e.tau_hat;
        vhat[r * P + k] = e.var_hat;
        covered[r * P + k] = inf.ci_lo <= sate && sate <= inf.ci_hi;
      } catch (const Error&) {
        // counted as a failure below
      }
    }
  });

  MonteCarloSummary out;
  out.sate = sate;
  out.replications = replications;
  out.seed = seed;
  out.alpha = alpha;
  for (std::size_t k = 0; k < P; ++k) {
    MonteCarloStats s;
    s.name = pipelines[k].name;
    double sum = 0.0, sum_v = 0.0, cov = 0.0;
    for (std::size_t r = 0; r < replications; ++r) {
      const double t = tau[r * P + k];
      if (std::isnan(t)) {
        ++s.failures;
        continue;
      }
      ++s.replications;
      sum += t;
      sum_v += vhat[r * P + k];
      cov += covered[r * P + k];
    }
    if (s.replications > 0) {
      const double R = static_cast<double>(s.replications);
      s.mean_tau = sum / R;
      s.bias = s.mean_tau - sate;
      s.mean_var_hat = sum_v / R;
      s.coverage = cov / R;
      double ss = 0.0;
      for (std::size_t r = 0; r < replications; ++r) {
        const double t = tau[r * P + k];
        if (!std::isnan(t)) ss += (t - s.mean_tau) * (t - s.mean_tau);
      }
      s.emp_var = s.replications > 1 ? ss / (R - 1.0) : 0.0;
      s.bias_se = std::sqrt(s.emp_var / R);
      s.coverage_se = std::sqrt(s.coverage * (1.0 - s.coverage) / R);
    }
    out.pipelines.push_back(std::move(s));
  }
  for (auto& s : out.pipelines) {
    for (const std::string& base : baselines) {
      if (base == s.name) continue;
      const auto it = std::find_if(out.pipelines.begin(), out.pipelines.end(),
                                   [&](const MonteCarloStats& o) { return o.name == base; });
      if (it == out.pipelines.end()) {
        throw PreconditionError("monte_carlo: unknown baseline " + base);
      }
      if (s.emp_var > 0.0) s.variance_ratios.emplace_back(base, variance_ratio(it->emp_var, s.emp_var));
    }
  }
  return out;
}

}  // namespace reloop
