#include "autosmote/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace autosmote::clf {

Kind parse_kind(const std::string& name) {
  if (name == "knn") return Kind::knn;
  if (name == "decision_tree") return Kind::decision_tree;
  if (name == "adaboost") return Kind::adaboost;
  if (name == "linear_svm") return Kind::linear_svm;
  throw ConfigError("unknown classifier kind '" + name + "'");
}

std::string to_string(Kind k) {
  switch (k) {
    case Kind::knn: return "knn";
    case Kind::decision_tree: return "decision_tree";
    case Kind::adaboost: return "adaboost";
    case Kind::linear_svm: return "linear_svm";
  }
  return "unknown";
}

namespace {

int as_int(double v, const std::string& name) {
  if (v != std::floor(v)) throw ConfigError("hyperparameter '" + name + "' must be an integer");
  return static_cast<int>(v);
}

}  // namespace

ClassifierSpec::ClassifierSpec(Kind kind, std::map<std::string, double> hyperparameters, std::uint64_t seed)
    : kind_(kind), hyper_(std::move(hyperparameters)), seed_(seed) {
  for (const auto& [name, value] : hyper_) {
    switch (kind_) {
      case Kind::knn:
        if (name == "k") knn_.k = as_int(value, name);
        else throw ConfigError("knn: unknown hyperparameter '" + name + "'");
        break;
      case Kind::decision_tree:
        if (name == "max_depth") tree_.max_depth = as_int(value, name);
        else if (name == "min_samples_split") tree_.min_samples_split = as_int(value, name);
        else throw ConfigError("decision_tree: unknown hyperparameter '" + name + "'");
        break;
      case Kind::adaboost:
        if (name == "rounds") ada_.rounds = as_int(value, name);
        else throw ConfigError("adaboost: unknown hyperparameter '" + name + "'");
        break;
      case Kind::linear_svm:
        if (name == "epochs") svm_.epochs = as_int(value, name);
        else if (name == "lambda") svm_.lambda = value;
        else throw ConfigError("linear_svm: unknown hyperparameter '" + name + "'");
        break;
    }
  }
  if (knn_.k < 1) throw ConfigError("knn: k must be >= 1");
  if (tree_.max_depth < 1) throw ConfigError("decision_tree: max_depth must be >= 1");
  if (tree_.min_samples_split < 2) throw ConfigError("decision_tree: min_samples_split must be >= 2");
  if (ada_.rounds < 1) throw ConfigError("adaboost: rounds must be >= 1");
  if (svm_.epochs < 1) throw ConfigError("linear_svm: epochs must be >= 1");
  if (!(svm_.lambda > 0.0)) throw ConfigError("linear_svm: lambda must be positive");
}

ClassifierSpec ClassifierSpec::with_seed(std::uint64_t seed) const {
  ClassifierSpec copy = *this;
  copy.seed_ = seed;
  return copy;
}

int TreeModel::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> level(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (n.feature >= 0) {
      level[static_cast<std::size_t>(n.left)] = level[i] + 1;
      level[static_cast<std::size_t>(n.right)] = level[i] + 1;
      deepest = std::max(deepest, level[i] + 1);
    }
  }
  return deepest;
}

// ---------------------------------------------------------------- CART

namespace {

struct TreeBuilder {
  const Matrix& x;
  const Labels& y;
  const Vector& w;
  TreeParams params;
  std::vector<TreeNode> nodes;

  static double gini(double w0, double w1) {
    const double t = w0 + w1;
    if (t <= 0.0) return 0.0;
    const double p0 = w0 / t, p1 = w1 / t;
    return 1.0 - p0 * p0 - p1 * p1;
  }

  // Ties go to the majority class.
  static int leaf_label(double w0, double w1) { return w1 > w0 ? kMinority : kMajority; }

  int build(std::vector<Index>& rows, int depth) {
    double w0 = 0.0, w1 = 0.0;
    for (Index r : rows) (y(r) == kMinority ? w1 : w0) += w(r);
    const int id = static_cast<int>(nodes.size());
    nodes.push_back(TreeNode{-1, 0.0, -1, -1, leaf_label(w0, w1)});
    if (depth >= params.max_depth || static_cast<int>(rows.size()) < params.min_samples_split || w0 == 0.0 ||
        w1 == 0.0) {
      return id;
    }

    const double total = w0 + w1;
    const double parent = gini(w0, w1);
    double best_gain = 0.0;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<Index> order(rows);
    for (Index f = 0; f < x.cols(); ++f) {
      std::sort(order.begin(), order.end(), [&](Index a, Index b) {
        const double xa = x(a, f), xb = x(b, f);
        return xa < xb || (xa == xb && a < b);
      });
      double l0 = 0.0, l1 = 0.0;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        const Index r = order[i];
        (y(r) == kMinority ? l1 : l0) += w(r);
        const double here = x(r, f), next = x(order[i + 1], f);
        if (here == next) continue;
        const double lw = l0 + l1;
        const double rw = total - lw;
        const double child = (lw * gini(l0, l1) + rw * gini(w0 - l0, w1 - l1)) / total;
        const double gain = parent - child;
        // Strict improvement keeps the lowest feature, then the lowest threshold.
        if (gain > best_gain + 1e-12) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = 0.5 * (here + next);
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<Index> left, right;
    for (Index r : rows) (x(r, best_feature) <= best_threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    nodes[static_cast<std::size_t>(id)].feature = best_feature;
    nodes[static_cast<std::size_t>(id)].threshold = best_threshold;
    const int l = build(left, depth + 1);
    const int r = build(right, depth + 1);
    nodes[static_cast<std::size_t>(id)].left = l;
    nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }
};

void require_both_classes(const data::Dataset& train) {
  if (train.rows() == 0) throw DataError("fit: empty training set");
  if (train.n_minority() == 0 || train.n_majority() == 0) throw DataError("fit: training data has a single class");
}

}  // namespace

TreeModel fit_tree(const Matrix& x, const Labels& y, const Vector& weights, const TreeParams& params) {
  TreeBuilder builder{x, y, weights, params, {}};
  std::vector<Index> rows(static_cast<std::size_t>(x.rows()));
  std::iota(rows.begin(), rows.end(), Index{0});
  builder.build(rows, 0);
  return TreeModel{std::move(builder.nodes)};
}

int predict_tree(const TreeModel& tree, const Eigen::Ref<const RowVector>& row) {
  int node = 0;
  while (tree.nodes[static_cast<std::size_t>(node)].feature >= 0) {
    const auto& n = tree.nodes[static_cast<std::size_t>(node)];
    node = row(n.feature) <= n.threshold ? n.left : n.right;
  }
  return tree.nodes[static_cast<std::size_t>(node)].label;
}

// ---------------------------------------------------------------- models

namespace {

KnnModel fit_knn(const KnnParams& p, const data::Dataset& train) { return KnnModel{train.features, train.labels, p.k}; }

Labels predict_knn(const KnnModel& m, const Matrix& q) {
  const Index n = m.points.rows();
  const Index k = std::min<Index>(m.k, n);
  Labels out(q.rows());
  std::vector<Index> idx(static_cast<std::size_t>(n));
  Vector d(n);
  for (Index i = 0; i < q.rows(); ++i) {
    d = (m.points.rowwise() - q.row(i)).rowwise().squaredNorm();
    std::iota(idx.begin(), idx.end(), Index{0});
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                      [&](Index a, Index b) { return d(a) < d(b) || (d(a) == d(b) && a < b); });
    Index votes = 0;
    for (Index j = 0; j < k; ++j) votes += m.labels(idx[static_cast<std::size_t>(j)]) == kMinority;
    out(i) = 2 * votes > k ? kMinority : kMajority;
  }
  return out;
}

AdaBoostModel fit_adaboost(const AdaBoostParams& p, const data::Dataset& train) {
  const Index n = train.rows();
  Vector w = Vector::Constant(n, 1.0 / static_cast<double>(n));
  AdaBoostModel model;
  const TreeParams stump{1, 2};
  for (int round = 0; round < p.rounds; ++round) {
    TreeModel stump_model = fit_tree(train.features, train.labels, w, stump);
    Eigen::ArrayXd miss(n);
    for (Index i = 0; i < n; ++i) {
      miss(i) = predict_tree(stump_model, train.features.row(i)) != train.labels(i) ? 1.0 : 0.0;
    }
    const double err = (w.array() * miss).sum() / w.sum();
    if (err >= 0.5) {
      if (model.stumps.empty()) {
        model.stumps.push_back(std::move(stump_model));
        model.alphas.push_back(1.0);
      }
      break;
    }
    if (err <= 0.0) {
      model.stumps.push_back(std::move(stump_model));
      model.alphas.push_back(model.alphas.empty() ? 1.0 : 10.0 * (*std::max_element(model.alphas.begin(), model.alphas.end())));
      break;
    }
    // SAMME with two classes: log((1 - err) / err) + log(K - 1).
    const double alpha = std::log((1.0 - err) / err);
    model.stumps.push_back(std::move(stump_model));
    model.alphas.push_back(alpha);
    w.array() *= (alpha * miss).exp();
    w /= w.sum();
  }
  return model;
}

Labels predict_adaboost(const AdaBoostModel& m, const Matrix& q) {
  Labels out(q.rows());
  for (Index i = 0; i < q.rows(); ++i) {
    double vote = 0.0;
    for (std::size_t s = 0; s < m.stumps.size(); ++s) {
      vote += (predict_tree(m.stumps[s], q.row(i)) == kMinority ? 1.0 : -1.0) * m.alphas[s];
    }
    out(i) = vote > 0.0 ? kMinority : kMajority;
  }
  return out;
}

// Pegasos-style subgradient descent on the L2-regularized hinge loss. The bias
// is an extra constant feature and is regularized with the weights.
SvmModel fit_svm(const SvmParams& p, const data::Dataset& train, std::uint64_t seed) {
  const Index n = train.rows();
  const Index d = train.dims();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(derive_seed(seed, "svm-order"));
  std::shuffle(order.begin(), order.end(), rng);

  Vector w = Vector::Zero(d + 1);
  Vector xi(d + 1);
  double t = 0.0;
  for (int epoch = 0; epoch < p.epochs; ++epoch) {
    for (Index r : order) {
      t += 1.0;
      const double eta = 1.0 / (p.lambda * t);
      xi.head(d) = train.features.row(r).transpose();
      xi(d) = 1.0;
      const double yi = train.labels(r) == kMinority ? 1.0 : -1.0;
      const double margin = yi * w.dot(xi);
      w *= (1.0 - eta * p.lambda);
      if (margin < 1.0) w += eta * yi * xi;
    }
  }
  return SvmModel{w.head(d), w(d)};
}

Labels predict_svm(const SvmModel& m, const Matrix& q) {
  const Vector scores = (q * m.weights).array() + m.bias;
  return (scores.array() > 0.0).cast<int>().matrix();
}

}  // namespace

TrainedClassifier fit(const ClassifierSpec& spec, const data::Dataset& train) {
  require_both_classes(train);
  TrainedClassifier out{spec, train.dims(), {}};
  switch (spec.kind()) {
    case Kind::knn:
      out.model = fit_knn(spec.knn(), train);
      break;
    case Kind::decision_tree:
      out.model = fit_tree(train.features, train.labels, Vector::Ones(train.rows()), spec.tree());
      break;
    case Kind::adaboost:
      out.model = fit_adaboost(spec.adaboost(), train);
      break;
    case Kind::linear_svm:
      out.model = fit_svm(spec.svm(), train, spec.seed());
      break;
  }
  return out;
}

Labels predict(const TrainedClassifier& model, const Matrix& features) {
  if (features.rows() == 0) return Labels(0);
  if (features.cols() != model.dims) throw std::invalid_argument("predict: feature dimension mismatch");
  return std::visit(
      [&](const auto& m) -> Labels {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, KnnModel>) {
          return predict_knn(m, features);
        } else if constexpr (std::is_same_v<M, TreeModel>) {
          Labels out(features.rows());
          for (Index i = 0; i < features.rows(); ++i) out(i) = predict_tree(m, features.row(i));
          return out;
        } else if constexpr (std::is_same_v<M, AdaBoostModel>) {
          return predict_adaboost(m, features);
        } else {
          return predict_svm(m, features);
        }
      },
      model.model);
}

double evaluate(const TrainedClassifier& model, const data::Dataset& eval_set, metrics::Metric metric) {
  if (eval_set.rows() == 0) throw std::invalid_argument("evaluate: empty evaluation set");
  return metrics::score(metric, metrics::confusion(eval_set.labels, predict(model, eval_set.features)));
}

}  // namespace autosmote::clf
