#include "propweight/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "propweight/error.hpp"

namespace propweight {

namespace {

// Each feature's sorted distinct values and each row's index into them.
struct BinnedFeatures {
  std::vector<std::vector<double>> values;
  std::vector<std::vector<int>> bins;
};

BinnedFeatures bin_features(const Eigen::MatrixXd& x) {
  BinnedFeatures out;
  const auto n = static_cast<std::size_t>(x.rows());
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    std::vector<double> v(x.col(f).data(), x.col(f).data() + n);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    std::vector<int> b(n);
    for (std::size_t i = 0; i < n; ++i)
      b[i] = static_cast<int>(std::lower_bound(v.begin(), v.end(), x(static_cast<Eigen::Index>(i), f)) - v.begin());
    out.values.push_back(std::move(v));
    out.bins.push_back(std::move(b));
  }
  return out;
}

struct Split {
  int feature = -1;
  int last_left_bin = -1;
  double threshold = 0.0;
  double score = -1.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const BinnedFeatures& data, std::span<const double> labels, const ForestConfig& cfg,
              int mtry, Rng& rng)
      : data_(data), labels_(labels), cfg_(cfg), mtry_(mtry), rng_(rng) {
    std::size_t max_bins = 0;
    for (const auto& v : data.values) max_bins = std::max(max_bins, v.size());
    count_.assign(max_bins, 0.0);
    ones_.assign(max_bins, 0.0);
    features_.resize(data.values.size());
  }

  RandomForest::Tree grow(std::vector<int>& rows) {
    RandomForest::Tree tree;
    struct Pending {
      int node;
      std::size_t lo, hi;
      int depth;
    };
    tree.push_back({});
    std::vector<Pending> stack{{0, 0, rows.size(), 0}};
    while (!stack.empty()) {
      const Pending job = stack.back();
      stack.pop_back();
      const std::size_t size = job.hi - job.lo;
      double n1 = 0.0;
      for (std::size_t k = job.lo; k < job.hi; ++k) n1 += labels_[static_cast<std::size_t>(rows[k])];
      tree[job.node].probability = n1 / static_cast<double>(size);
      const bool pure = n1 == 0.0 || n1 == static_cast<double>(size);
      const bool too_small = size < 2 * static_cast<std::size_t>(cfg_.min_leaf) || size < 2;
      const bool too_deep = cfg_.max_depth > 0 && job.depth >= cfg_.max_depth;
      if (pure || too_small || too_deep) continue;

      const Split split = best_split(rows, job.lo, job.hi, n1);
      if (split.feature < 0) continue;
      const auto& bins = data_.bins[static_cast<std::size_t>(split.feature)];
      auto mid_it = std::partition(rows.begin() + static_cast<std::ptrdiff_t>(job.lo),
                                   rows.begin() + static_cast<std::ptrdiff_t>(job.hi),
                                   [&](int r) { return bins[static_cast<std::size_t>(r)] <= split.last_left_bin; });
      const auto mid = static_cast<std::size_t>(mid_it - rows.begin());
      const int left = static_cast<int>(tree.size());
      tree.push_back({});
      tree.push_back({});
      tree[job.node].feature = split.feature;
      tree[job.node].threshold = split.threshold;
      tree[job.node].left = left;
      tree[job.node].right = left + 1;
      stack.push_back({left + 1, mid, job.hi, job.depth + 1});
      stack.push_back({left, job.lo, mid, job.depth + 1});
    }
    return tree;
  }

 private:
  Split best_split(const std::vector<int>& rows, std::size_t lo, std::size_t hi, double n1) {
    const auto p = static_cast<int>(features_.size());
    std::iota(features_.begin(), features_.end(), 0);
    const double total = static_cast<double>(hi - lo);
    const double parent = (n1 * n1 + (total - n1) * (total - n1)) / total;
    Split best;
    for (int t = 0; t < mtry_; ++t) {
      const auto j = t + static_cast<int>(uniform_index(rng_, static_cast<std::size_t>(p - t)));
      std::swap(features_[static_cast<std::size_t>(t)], features_[static_cast<std::size_t>(j)]);
      const int f = features_[static_cast<std::size_t>(t)];
      evaluate_feature(f, rows, lo, hi, n1, parent, best);
    }
    return best;
  }

  void consider(int f, int prev_bin, int bin, double left_n, double left_1, double total, double n1,
                double parent, Split& best) const {
    const double right_n = total - left_n;
    if (left_n < cfg_.min_leaf || right_n < cfg_.min_leaf) return;
    const double right_1 = n1 - left_1;
    const double left_0 = left_n - left_1;
    const double right_0 = right_n - right_1;
    const double score =
        (left_1 * left_1 + left_0 * left_0) / left_n + (right_1 * right_1 + right_0 * right_0) / right_n;
    const double gain = score - parent;
    if (gain > 1e-12 * total && gain > best.score) {
      const auto& v = data_.values[static_cast<std::size_t>(f)];
      best.score = gain;
      best.feature = f;
      best.last_left_bin = prev_bin;
      best.threshold = 0.5 * (v[static_cast<std::size_t>(prev_bin)] + v[static_cast<std::size_t>(bin)]);
    }
  }

  void evaluate_feature(int f, const std::vector<int>& rows, std::size_t lo, std::size_t hi,
                        double n1, double parent, Split& best) {
    const auto& bins = data_.bins[static_cast<std::size_t>(f)];
    const auto n_bins = data_.values[static_cast<std::size_t>(f)].size();
    const double total = static_cast<double>(hi - lo);
    if (n_bins < 2) return;
    if (n_bins <= 4 * (hi - lo)) {
      int min_bin = std::numeric_limits<int>::max(), max_bin = -1;
      for (std::size_t k = lo; k < hi; ++k) {
        const auto r = static_cast<std::size_t>(rows[k]);
        const int b = bins[r];
        count_[static_cast<std::size_t>(b)] += 1.0;
        ones_[static_cast<std::size_t>(b)] += labels_[r];
        min_bin = std::min(min_bin, b);
        max_bin = std::max(max_bin, b);
      }
      double left_n = 0.0, left_1 = 0.0;
      int prev = -1;
      for (int b = min_bin; b <= max_bin; ++b) {
        const auto ub = static_cast<std::size_t>(b);
        if (count_[ub] == 0.0) continue;
        if (prev >= 0) consider(f, prev, b, left_n, left_1, total, n1, parent, best);
        left_n += count_[ub];
        left_1 += ones_[ub];
        prev = b;
      }
      for (int b = min_bin; b <= max_bin; ++b) {
        count_[static_cast<std::size_t>(b)] = 0.0;
        ones_[static_cast<std::size_t>(b)] = 0.0;
      }
      return;
    }
    sorted_.clear();
    for (std::size_t k = lo; k < hi; ++k) {
      const auto r = static_cast<std::size_t>(rows[k]);
      sorted_.emplace_back(bins[r], labels_[r]);
    }
    std::sort(sorted_.begin(), sorted_.end());
    double left_n = 0.0, left_1 = 0.0;
    for (std::size_t k = 0; k < sorted_.size(); ++k) {
      if (k > 0 && sorted_[k].first != sorted_[k - 1].first)
        consider(f, sorted_[k - 1].first, sorted_[k].first, left_n, left_1, total, n1, parent, best);
      left_n += 1.0;
      left_1 += sorted_[k].second;
    }
  }

  const BinnedFeatures& data_;
  std::span<const double> labels_;
  const ForestConfig& cfg_;
  int mtry_;
  Rng& rng_;
  std::vector<double> count_, ones_;
  std::vector<int> features_;
  std::vector<std::pair<int, double>> sorted_;
};

}  // namespace

double predict_tree(const RandomForest::Tree& tree, const Eigen::MatrixXd& features, Eigen::Index row) {
  int node = 0;
  while (tree[static_cast<std::size_t>(node)].feature >= 0) {
    const auto& n = tree[static_cast<std::size_t>(node)];
    node = features(row, n.feature) <= n.threshold ? n.left : n.right;
  }
  return tree[static_cast<std::size_t>(node)].probability;
}

Eigen::VectorXd RandomForest::predict(const Eigen::MatrixXd& features) const {
  if (static_cast<std::size_t>(features.cols()) != n_features_)
    fail(ErrorKind::SchemaMismatch, "forest was trained on a different number of features");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(features.rows());
  for (const auto& tree : trees_)
    for (Eigen::Index i = 0; i < features.rows(); ++i) out(i) += predict_tree(tree, features, i);
  return out / static_cast<double>(trees_.size());
}

RandomForest fit_random_forest(const Eigen::MatrixXd& features, std::span<const double> labels,
                               const ForestConfig& cfg, Execution policy) {
  const auto n = static_cast<std::size_t>(features.rows());
  const auto p = static_cast<int>(features.cols());
  if (labels.size() != n) fail(ErrorKind::DimensionMismatch, "one label per row required");
  if (n < 2) fail(ErrorKind::InvalidArgument, "random forest needs at least two rows");
  if (p == 0) fail(ErrorKind::DegenerateFeatures, "no features");
  double ones = 0.0;
  for (double y : labels) {
    if (y != 0.0 && y != 1.0) fail(ErrorKind::InvalidArgument, "labels must be 0/1");
    ones += y;
  }
  if (ones == 0.0 || ones == static_cast<double>(n))
    fail(ErrorKind::InvalidArgument, "both classes must be present");
  if (cfg.n_trees < 1 || cfg.min_leaf < 1) fail(ErrorKind::InvalidArgument, "invalid forest config");
  const int mtry = cfg.mtry > 0 ? cfg.mtry : std::max(1, static_cast<int>(std::floor(std::sqrt(p))));
  if (mtry > p) fail(ErrorKind::InvalidArgument, "mtry exceeds the number of features");

  const BinnedFeatures binned = bin_features(features);
  if (std::all_of(binned.values.begin(), binned.values.end(),
                  [](const std::vector<double>& v) { return v.size() < 2; }))
    fail(ErrorKind::DegenerateFeatures, "all features are constant");

  RandomForest forest;
  forest.n_features_ = static_cast<std::size_t>(p);
  forest.trees_.resize(static_cast<std::size_t>(cfg.n_trees));
  std::vector<std::vector<char>> in_bag(static_cast<std::size_t>(cfg.n_trees));

  for_each_index(static_cast<std::size_t>(cfg.n_trees), policy, [&](std::size_t t) {
    Rng rng = make_stream(cfg.seed, t);
    std::vector<int> rows(n);
    std::vector<char> bag(n, 0);
    for (auto& r : rows) {
      r = static_cast<int>(uniform_index(rng, n));
      bag[static_cast<std::size_t>(r)] = 1;
    }
    TreeBuilder builder(binned, labels, cfg, mtry, rng);
    forest.trees_[t] = builder.grow(rows);
    in_bag[t] = std::move(bag);
  });

  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  Eigen::VectorXd count = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t t = 0; t < forest.trees_.size(); ++t)
    for (std::size_t i = 0; i < n; ++i)
      if (!in_bag[t][i]) {
        sum(static_cast<Eigen::Index>(i)) += predict_tree(forest.trees_[t], features, static_cast<Eigen::Index>(i));
        count(static_cast<Eigen::Index>(i)) += 1.0;
      }
  forest.oob_probability_.resize(static_cast<Eigen::Index>(n));
  double errors = 0.0, scored = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (count(ii) == 0.0) {
      forest.oob_probability_(ii) = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    forest.oob_probability_(ii) = sum(ii) / count(ii);
    scored += 1.0;
    errors += ((forest.oob_probability_(ii) > 0.5) != (labels[i] == 1.0)) ? 1.0 : 0.0;
  }
  forest.oob_error_ = scored > 0.0 ? errors / scored : std::numeric_limits<double>::quiet_NaN();
  return forest;
}

nlohmann::json RandomForest::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : trees_) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& node : tree)
      nodes.push_back({node.feature, node.threshold, node.left, node.right, node.probability});
    trees.push_back(std::move(nodes));
  }
  return {{"n_features", n_features_}, {"oob_error", oob_error_}, {"trees", trees}};
}

RandomForest RandomForest::from_json(const nlohmann::json& doc) {
  RandomForest forest;
  forest.n_features_ = doc.at("n_features").get<std::size_t>();
  forest.oob_error_ = doc.at("oob_error").is_number() ? doc.at("oob_error").get<double>()
                                                      : std::numeric_limits<double>::quiet_NaN();
  for (const auto& t : doc.at("trees")) {
    Tree tree;
    for (const auto& node : t)
      tree.push_back({node.at(0).get<int>(), node.at(1).get<double>(), node.at(2).get<int>(),
                      node.at(3).get<int>(), node.at(4).get<double>()});
    forest.trees_.push_back(std::move(tree));
  }
  return forest;
}

}  // namespace propweight
