#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "reloop/rng.hpp"

namespace reloop {

struct ForestParams {
  std::size_t trees = 500;
  // Variables tried per split; 0 means ceil(features / 3), at least 1.
  std::size_t mtry = 0;
  std::size_t min_leaf = 5;
  // Root is depth 0. Unset means grow until min_leaf or purity stops it.
  std::optional<std::size_t> max_depth;
  std::uint64_t seed = 0;
};

// Per-tree, per-unit bootstrap multiplicities. Counts are independent
// Poisson(1) draws, one stream per tree, drawn in unit order, so unit j's
// count in tree t depends only on (seed, t, j) and never on which other units
// happen to share its arm.
class BootstrapCounts {
 public:
  BootstrapCounts(std::uint64_t seed, std::size_t trees, std::size_t units);

  std::size_t trees() const { return trees_; }
  std::size_t units() const { return units_; }
  unsigned count(std::size_t tree, std::size_t unit) const {
    return counts_[tree * units_ + unit];
  }
  bool out_of_bag(std::size_t tree, std::size_t unit) const {
    return count(tree, unit) == 0;
  }

 private:
  std::size_t trees_;
  std::size_t units_;
  std::vector<std::uint16_t> counts_;
};

// CART regression tree grown on weighted samples with variance-reduction
// splits.
class RegressionTree {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };

  // features: one row per unit. samples/weights: the training units (row
  // indices) and their positive multiplicities, in ascending index order.
  static RegressionTree grow(const Eigen::MatrixXd& features,
                             std::span<const double> outcomes,
                             std::span<const std::size_t> samples,
                             std::span<const double> weights,
                             const ForestParams& params, Engine& rng);

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& row) const;
  std::size_t node_count() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

// One forest per treatment arm, all sharing the same BootstrapCounts. Tree t
// of the arm-z forest is trained on {j : arm_j == z, count(t, j) > 0}; it is
// absent when that set is empty. predictions(z)(t, j) holds tree t's
// prediction at unit j (NaN when absent).
class ArmForests {
 public:
  ArmForests(const Eigen::MatrixXd& features, std::span<const double> outcomes,
             std::span<const int> arms, const ForestParams& params);

  const BootstrapCounts& counts() const { return counts_; }
  const Eigen::MatrixXd& predictions(int arm) const { return pred_[arm]; }
  bool present(int arm, std::size_t tree) const { return present_[arm][tree]; }

 private:
  BootstrapCounts counts_;
  Eigen::MatrixXd pred_[2];
  std::vector<bool> present_[2];
};

// Resolved mtry for a feature count.
std::size_t resolve_mtry(const ForestParams& params, std::size_t features);

}  // namespace reloop
