#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "propweight/parallel.hpp"
#include "propweight/rng.hpp"

namespace propweight {

struct ForestConfig {
  int n_trees = 500;
  int mtry = 0;       // 0: floor(sqrt(number of features))
  int min_leaf = 1;
  int max_depth = 0;  // 0: unlimited
  std::uint64_t seed = kDefaultSeed;
};

// Bagged CART classification trees with Gini splits. Class-1 probability is
// the mean over trees of the leaf's in-bag class-1 proportion.
class RandomForest {
 public:
  struct Node {
    int feature = -1;  // -1 for a leaf
    double threshold = 0.0;  // go left when x <= threshold
    int left = -1;
    int right = -1;
    double probability = 0.0;
  };
  using Tree = std::vector<Node>;

  Eigen::VectorXd predict(const Eigen::MatrixXd& features) const;

  const std::vector<Tree>& trees() const { return trees_; }
  std::size_t n_features() const { return n_features_; }
  // Out-of-bag class-1 probability per training row (NaN if always in bag).
  const Eigen::VectorXd& oob_probability() const { return oob_probability_; }
  double oob_error() const { return oob_error_; }

  nlohmann::json to_json() const;
  static RandomForest from_json(const nlohmann::json& doc);

 private:
  friend RandomForest fit_random_forest(const Eigen::MatrixXd&, std::span<const double>,
                                        const ForestConfig&, Execution);
  std::vector<Tree> trees_;
  std::size_t n_features_ = 0;
  Eigen::VectorXd oob_probability_;
  double oob_error_ = 0.0;
};

double predict_tree(const RandomForest::Tree& tree, const Eigen::MatrixXd& features, Eigen::Index row);

// Trees are grown independently from per-tree RNG substreams of cfg.seed, so
// serial and parallel execution give identical forests.
RandomForest fit_random_forest(const Eigen::MatrixXd& features, std::span<const double> labels,
                               const ForestConfig& cfg, Execution policy = Execution::parallel);

}  // namespace propweight
