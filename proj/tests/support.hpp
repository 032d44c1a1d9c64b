#pragma once

// Dataset builders shared by the unit and acceptance tests.

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "reloop/domain.hpp"

namespace reloop::testing {

inline ContrastDataset make_ds(const std::vector<double>& y, const std::vector<int>& z,
                               const std::vector<double>& yhat_r = {},
                               const std::vector<std::vector<double>>& x = {},
                               double p = 0.5, const std::string& id = "c") {
  std::vector<UnitRecord> units(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    units[i].unit_id = "u" + std::to_string(i);
    units[i].y = y[i];
    units[i].z = z[i];
    if (!yhat_r.empty()) units[i].yhat_r = yhat_r[i];
    if (!x.empty()) units[i].x = x[i];
  }
  return ContrastDataset(id, std::move(units), p);
}

// n units, k covariates, outcome linear in x plus noise, yhat_r a noisy
// version of the outcome signal. z is Bernoulli(p) but forced to leave at
// least `min_arm` units in each arm.
inline ContrastDataset random_ds(std::mt19937_64& rng, std::size_t n, std::size_t k,
                                 double p = 0.5, std::size_t min_arm = 3,
                                 const std::string& id = "c") {
  std::normal_distribution<double> N(0.0, 1.0);
  std::bernoulli_distribution B(p);
  std::vector<double> y(n), r(n);
  std::vector<int> z(n);
  std::vector<std::vector<double>> x(n, std::vector<double>(k));
  for (;;) {
    std::size_t n1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = B(rng);
      n1 += z[i];
    }
    if (n1 >= min_arm && n - n1 >= min_arm) break;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (auto& v : x[i]) {
      v = N(rng);
      s += v;
    }
    y[i] = s + 0.5 * z[i] + N(rng);
    r[i] = s + 0.5 * N(rng);
  }
  return make_ds(y, z, r, x, p, id);
}

}  // namespace reloop::testing
