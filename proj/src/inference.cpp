#include "reloop/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "reloop/errors.hpp"

namespace reloop {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double prob) {
  if (!(prob > 0.0 && prob < 1.0)) {
    throw PreconditionError("normal_quantile: probability must lie in (0,1)");
  }
  return boost::math::quantile(boost::math::normal_distribution<double>(), prob);
}

InferenceResult z_inference(const EffectEstimate& est, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw PreconditionError("z_inference: alpha must lie in (0,1)");
  }
  if (!(est.var_hat >= 0.0)) {
    throw PreconditionError("z_inference: negative or undefined variance");
  }
  InferenceResult r;
  r.estimate = est;
  r.alpha = alpha;
  r.se = std::sqrt(est.var_hat);
  const double z = normal_quantile(1.0 - alpha / 2.0);
  r.ci_lo = est.tau_hat - z * r.se;
  r.ci_hi = est.tau_hat + z * r.se;
  if (r.se == 0.0) {
    r.p_value = est.tau_hat != 0.0 ? 0.0 : 1.0;
  } else {
    r.p_value = std::min(1.0, std::erfc(std::abs(est.tau_hat / r.se) / std::sqrt(2.0)));
  }
  return r;
}

std::size_t FdrAdjustment::rejections() const {
  return static_cast<std::size_t>(std::count(rejected.begin(), rejected.end(), true));
}

namespace {

FdrAdjustment step_up(std::span<const double> pvals, double alpha, double scale) {
  for (double p : pvals) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw PreconditionError("FDR adjustment: p-values must lie in [0,1]");
    }
  }
  const std::size_t m = pvals.size();
  FdrAdjustment out;
  out.rejected.assign(m, false);
  out.adjusted.assign(m, 1.0);
  if (m == 0) return out;

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return pvals[a] < pvals[b]; });

  const double mm = static_cast<double>(m) * scale;
  std::size_t cutoff = 0;  // number of rejected ranks
  for (std::size_t rank = m; rank >= 1; --rank) {
    if (pvals[order[rank - 1]] <= alpha * static_cast<double>(rank) / mm) {
      cutoff = rank;
      break;
    }
  }
  for (std::size_t rank = 1; rank <= cutoff; ++rank) out.rejected[order[rank - 1]] = true;

  double running = 1.0;
  for (std::size_t rank = m; rank >= 1; --rank) {
    const std::size_t idx = order[rank - 1];
    running = std::min(running, std::min(1.0, mm * pvals[idx] / static_cast<double>(rank)));
    out.adjusted[idx] = running;
  }
  return out;
}

}  // namespace

FdrAdjustment bh_adjust(std::span<const double> pvals, double alpha) {
  return step_up(pvals, alpha, 1.0);
}

FdrAdjustment by_adjust(std::span<const double> pvals, double alpha) {
  double harmonic = 0.0;
  for (std::size_t j = 1; j <= pvals.size(); ++j) harmonic += 1.0 / static_cast<double>(j);
  return step_up(pvals, alpha, std::max(1.0, harmonic));
}

double variance_ratio(double v_baseline, double v_method) {
  if (!(v_method > 0.0)) {
    throw PreconditionError("variance_ratio: method variance must be positive");
  }
  return v_baseline / v_method;
}

}  // namespace reloop
