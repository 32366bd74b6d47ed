#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "autosmote/core.hpp"
#include "autosmote/data.hpp"
#include "autosmote/metrics.hpp"

namespace autosmote::clf {

enum class Kind { knn, decision_tree, adaboost, linear_svm };

Kind parse_kind(const std::string& name);
std::string to_string(Kind k);

struct KnnParams {
  int k = 5;
};

struct TreeParams {
  int max_depth = 10;
  int min_samples_split = 2;
};

struct AdaBoostParams {
  int rounds = 50;
};

struct SvmParams {
  int epochs = 100;
  double lambda = 1e-4;
};

class ClassifierSpec {
 public:
  ClassifierSpec() = default;
  ClassifierSpec(Kind kind, std::map<std::string, double> hyperparameters = {}, std::uint64_t seed = 0);

  Kind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }
  ClassifierSpec with_seed(std::uint64_t seed) const;
  const std::map<std::string, double>& hyperparameters() const { return hyper_; }

  KnnParams knn() const { return knn_; }
  TreeParams tree() const { return tree_; }
  AdaBoostParams adaboost() const { return ada_; }
  SvmParams svm() const { return svm_; }

 private:
  Kind kind_ = Kind::decision_tree;
  std::map<std::string, double> hyper_;
  std::uint64_t seed_ = 0;
  KnnParams knn_;
  TreeParams tree_;
  AdaBoostParams ada_;
  SvmParams svm_;
};

// Flat array of CART nodes; node 0 is the root.
struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;  // x[feature] <= threshold
  int right = -1;
  int label = kMajority;
};

struct TreeModel {
  std::vector<TreeNode> nodes;

  int depth() const;
};

struct KnnModel {
  Matrix points;
  Labels labels;
  int k = 5;
};

struct AdaBoostModel {
  std::vector<TreeModel> stumps;
  std::vector<double> alphas;
};

struct SvmModel {
  Vector weights;
  double bias = 0.0;
};

using Model = std::variant<KnnModel, TreeModel, AdaBoostModel, SvmModel>;

struct TrainedClassifier {
  ClassifierSpec spec;
  Index dims = 0;
  Model model;
};

TrainedClassifier fit(const ClassifierSpec& spec, const data::Dataset& train);
Labels predict(const TrainedClassifier& model, const Matrix& features);
double evaluate(const TrainedClassifier& model, const data::Dataset& eval_set, metrics::Metric metric);

// Weighted CART with Gini impurity. Exposed for boosting and tests.
TreeModel fit_tree(const Matrix& x, const Labels& y, const Vector& weights, const TreeParams& params);
int predict_tree(const TreeModel& tree, const Eigen::Ref<const RowVector>& row);

}  // namespace autosmote::clf
