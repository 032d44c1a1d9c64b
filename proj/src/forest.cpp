#include "reloop/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "reloop/errors.hpp"

namespace reloop {

namespace {

// Substream 0 is reserved for bootstrap counts; tree growth uses 1 + arm.
constexpr std::uint64_t kCountsSubstream = 0;

}  // namespace

BootstrapCounts::BootstrapCounts(std::uint64_t seed, std::size_t trees,
                                 std::size_t units)
    : trees_(trees), units_(units), counts_(trees * units) {
  for (std::size_t t = 0; t < trees; ++t) {
    Engine rng = make_stream(seed, t, kCountsSubstream);
    std::poisson_distribution<int> draw(1.0);
    for (std::size_t j = 0; j < units; ++j) {
      counts_[t * units + j] = static_cast<std::uint16_t>(draw(rng));
    }
  }
}

std::size_t resolve_mtry(const ForestParams& params, std::size_t features) {
  if (features == 0) return 0;
  const std::size_t m = params.mtry > 0 ? params.mtry : (features + 2) / 3;
  return std::clamp<std::size_t>(m, 1, features);
}

namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

struct Pending {
  int node;
  std::vector<std::size_t> members;  // positions into the tree's sample list
  std::size_t depth;
};

}  // namespace

RegressionTree RegressionTree::grow(const Eigen::MatrixXd& features,
                                    std::span<const double> outcomes,
                                    std::span<const std::size_t> samples,
                                    std::span<const double> weights,
                                    const ForestParams& params, Engine& rng) {
  if (samples.empty() || samples.size() != weights.size()) {
    throw PreconditionError("RegressionTree::grow: empty or mismatched sample");
  }
  const std::size_t n_features = static_cast<std::size_t>(features.cols());
  const std::size_t mtry = resolve_mtry(params, n_features);
  const double min_leaf = static_cast<double>(std::max<std::size_t>(1, params.min_leaf));

  RegressionTree tree;
  std::vector<std::size_t> all(samples.size());
  std::iota(all.begin(), all.end(), 0);
  tree.nodes_.push_back(Node{});
  std::vector<Pending> stack;
  stack.push_back(Pending{0, std::move(all), 0});

  std::vector<std::size_t> feature_pool(n_features);
  std::vector<std::size_t> order;

  while (!stack.empty()) {
    Pending job = std::move(stack.back());
    stack.pop_back();

    // Shifting by the first outcome keeps a constant node exactly constant.
    const double shift = outcomes[samples[job.members.front()]];
    double w_total = 0.0;
    double s_total = 0.0;
    for (std::size_t m : job.members) {
      w_total += weights[m];
      s_total += weights[m] * (outcomes[samples[m]] - shift);
    }
    tree.nodes_[job.node].value = shift + s_total / w_total;

    const bool depth_ok = !params.max_depth || job.depth < *params.max_depth;
    if (!depth_ok || mtry == 0 || w_total < 2.0 * min_leaf) continue;

    std::iota(feature_pool.begin(), feature_pool.end(), 0);
    Split best;
    for (std::size_t draw = 0; draw < mtry; ++draw) {
      std::uniform_int_distribution<std::size_t> pick(draw, n_features - 1);
      std::swap(feature_pool[draw], feature_pool[pick(rng)]);
      const std::size_t f = feature_pool[draw];

      order = job.members;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double va = features(static_cast<Eigen::Index>(samples[a]), static_cast<Eigen::Index>(f));
        const double vb = features(static_cast<Eigen::Index>(samples[b]), static_cast<Eigen::Index>(f));
        return va < vb || (va == vb && a < b);
      });

      double w_left = 0.0;
      double s_left = 0.0;
      for (std::size_t pos = 0; pos + 1 < order.size(); ++pos) {
        const std::size_t m = order[pos];
        w_left += weights[m];
        s_left += weights[m] * (outcomes[samples[m]] - shift);
        const double v_here = features(static_cast<Eigen::Index>(samples[m]), static_cast<Eigen::Index>(f));
        const double v_next = features(static_cast<Eigen::Index>(samples[order[pos + 1]]), static_cast<Eigen::Index>(f));
        if (v_here == v_next) continue;
        const double w_right = w_total - w_left;
        if (w_left < min_leaf || w_right < min_leaf) continue;
        const double s_right = s_total - s_left;
        const double gain = s_left * s_left / w_left +
                            s_right * s_right / w_right -
                            s_total * s_total / w_total;
        if (gain > best.gain) {
          best.gain = gain;
          best.feature = static_cast<int>(f);
          best.threshold = 0.5 * (v_here + v_next);
          if (!(best.threshold > v_here && best.threshold <= v_next)) {
            best.threshold = v_next;
          }
        }
      }
    }
    if (best.feature < 0) continue;

    std::vector<std::size_t> left, right;
    for (std::size_t m : job.members) {
      const double v = features(static_cast<Eigen::Index>(samples[m]), best.feature);
      (v < best.threshold ? left : right).push_back(m);
    }
    const int left_id = static_cast<int>(tree.nodes_.size());
    tree.nodes_.push_back(Node{});
    const int right_id = static_cast<int>(tree.nodes_.size());
    tree.nodes_.push_back(Node{});
    Node& parent = tree.nodes_[job.node];
    parent.feature = best.feature;
    parent.threshold = best.threshold;
    parent.left = left_id;
    parent.right = right_id;
    stack.push_back(Pending{right_id, std::move(right), job.depth + 1});
    stack.push_back(Pending{left_id, std::move(left), job.depth + 1});
  }
  return tree;
}

double RegressionTree::predict(
    const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
  int id = 0;
  while (nodes_[id].feature >= 0) {
    const Node& node = nodes_[id];
    id = row(node.feature) < node.threshold ? node.left : node.right;
  }
  return nodes_[id].value;
}

ArmForests::ArmForests(const Eigen::MatrixXd& features,
                       std::span<const double> outcomes,
                       std::span<const int> arms, const ForestParams& params)
    : counts_(params.seed, params.trees, outcomes.size()) {
  const std::size_t n = outcomes.size();
  if (static_cast<std::size_t>(features.rows()) != n || arms.size() != n) {
    throw PreconditionError("ArmForests: feature rows, outcomes and arms differ in length");
  }
  if (params.trees == 0) throw PreconditionError("ArmForests: need at least one tree");

  std::vector<std::size_t> samples;
  std::vector<double> weights;
  for (int arm = 0; arm < 2; ++arm) {
    pred_[arm].setConstant(static_cast<Eigen::Index>(params.trees),
                           static_cast<Eigen::Index>(n),
                           std::numeric_limits<double>::quiet_NaN());
    present_[arm].assign(params.trees, false);
    for (std::size_t t = 0; t < params.trees; ++t) {
      samples.clear();
      weights.clear();
      for (std::size_t j = 0; j < n; ++j) {
        if (arms[j] == arm && counts_.count(t, j) > 0) {
          samples.push_back(j);
          weights.push_back(static_cast<double>(counts_.count(t, j)));
        }
      }
      if (samples.empty()) continue;
      Engine rng = make_stream(params.seed, t, 1 + static_cast<std::uint64_t>(arm));
      const RegressionTree tree =
          RegressionTree::grow(features, outcomes, samples, weights, params, rng);
      present_[arm][t] = true;
      for (std::size_t j = 0; j < n; ++j) {
        pred_[arm](static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) =
            tree.predict(features.row(static_cast<Eigen::Index>(j)));
      }
    }
  }
}

}  // namespace reloop
