#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "autosmote/classifiers.hpp"
#include "autosmote/core.hpp"
#include "autosmote/data.hpp"
#include "autosmote/metrics.hpp"
#include "autosmote/nn.hpp"
#include "autosmote/samplers.hpp"

// Hierarchical generation of SMOTE-constrained synthetic samples. A
// cross-instance policy picks a global scaling factor g1, an instance policy
// picks g2 for every minority instance, and the low-level policy spends
// g = g1 * g2 steps choosing (neighbor, lambda) pairs around that instance.
namespace autosmote::hrl {

inline constexpr int kUsageBins = 10;
inline constexpr int kLambdaSlots = 5;
inline constexpr std::array<double, kLambdaSlots> kLambdas{0.0, 0.25, 0.5, 0.75, 1.0};
inline constexpr int kActionFeatureDims = kUsageBins + kLambdaSlots;

// Width-10 bins; the last bin is open-ended.
constexpr int usage_bin(long count) { return static_cast<int>((count < 99 ? (count < 0 ? 0 : count) : 99) / 10); }

class UsageCounter {
 public:
  UsageCounter() = default;
  explicit UsageCounter(Index n) : counts_(static_cast<std::size_t>(n), 0) {}

  long count(Index i) const { return counts_.at(static_cast<std::size_t>(i)); }
  int bin(Index i) const { return usage_bin(count(i)); }
  void record(Index source, Index neighbor) {
    ++counts_.at(static_cast<std::size_t>(source));
    ++counts_.at(static_cast<std::size_t>(neighbor));
  }
  long total() const;
  Index size() const { return static_cast<Index>(counts_.size()); }

 private:
  std::vector<long> counts_;
};

struct SearchState {
  Vector instance_features;
  Vector usage_bins;  // one-hot, kUsageBins entries

  Vector flatten() const;
};

SearchState state_features(Index instance, const Matrix& minority, const UsageCounter& counter);

// Dataset-level summary for the single cross-instance decision: mean minority
// features with the first usage bin active.
SearchState cross_state(const Matrix& minority);

struct GoalAction {
  int g1 = 0;
  int g2 = 0;

  int goal() const { return g1 * g2; }
};

struct InterpAction {
  int neighbor_slot = 0;
  int lambda_slot = 0;

  int flat() const { return neighbor_slot * kLambdaSlots + lambda_slot; }
  double lambda() const { return kLambdas.at(static_cast<std::size_t>(lambda_slot)); }
  static InterpAction from_flat(int index) { return {index / kLambdaSlots, index % kLambdaSlots}; }
};

// Usage-bin one-hot of the candidate neighbor followed by the lambda one-hot.
Vector low_action_features(const InterpAction& action, Index neighbor_instance, const UsageCounter& counter);

// Features of every candidate action given the usage bin of each neighbor
// slot; one column per flat action index.
Matrix low_action_matrix(std::span<const int> neighbor_bins);

enum class Level { cross, instance, low };

struct Step {
  Vector state;
  int action = 0;
  double behavior_prob = 1.0;
  double reward = 0.0;
  Eigen::VectorXi neighbor_bins;  // low level only: usage bin of each neighbor slot
};

struct Trajectory {
  Level level = Level::low;
  std::vector<Step> steps;

  Index size() const { return static_cast<Index>(steps.size()); }
};

// ---------------------------------------------------------------- networks

struct HighPolicyNet {
  nn::Mlp trunk;
  nn::Dense policy_head;
  nn::Dense value_head;

  Index n_actions() const { return policy_head.weight.rows(); }

  template <class F>
  void visit(F&& f) {
    trunk.visit(f);
    policy_head.visit(f);
    value_head.visit(f);
  }
  template <class F>
  void visit(F&& f) const {
    trunk.visit(f);
    policy_head.visit(f);
    value_head.visit(f);
  }
};

struct LowPolicyNet {
  nn::Mlp trunk;
  nn::Dense value_head;
  nn::ActionScorer scorer;

  template <class F>
  void visit(F&& f) {
    trunk.visit(f);
    value_head.visit(f);
    scorer.visit(f);
  }
  template <class F>
  void visit(F&& f) const {
    trunk.visit(f);
    value_head.visit(f);
    scorer.visit(f);
  }
};

struct NetworkShape {
  Index state_dims = 0;
  int g1_max = 1;
  int g2_max = 10;
  std::vector<Index> hidden{128, 128};
  Index scorer_hidden = 128;
};

struct PolicyBundle {
  HighPolicyNet cross;
  HighPolicyNet instance;
  LowPolicyNet low;

  static PolicyBundle create(const NetworkShape& shape, std::uint64_t seed);
};

HighPolicyNet make_high_policy(Index state_dims, std::span<const Index> hidden, Index n_actions, std::uint64_t seed);
LowPolicyNet make_low_policy(Index state_dims, std::span<const Index> hidden, Index scorer_hidden,
                             std::uint64_t seed);

struct HighOutput {
  Matrix probs;   // n_actions x batch
  Vector values;  // batch
};

HighOutput evaluate(const HighPolicyNet& net, const Matrix& states);
Vector action_probs(const LowPolicyNet& net, const Vector& state, const Matrix& action_features);
double state_value(const LowPolicyNet& net, const Vector& state);

// ---------------------------------------------------------------- generation

struct Choice {
  int action = 0;
  double prob = 1.0;
};

// Source of decisions for the three levels. Implementations: the policy
// networks (sampled or greedy), uniform random, or scripted in tests.
class Decider {
 public:
  virtual ~Decider() = default;
  virtual Choice cross(const Vector& state) = 0;
  virtual Choice instance(const Vector& state) = 0;
  virtual Choice low(const Vector& state, const Matrix& action_features) = 0;
};

enum class Mode { sample, greedy };

class PolicyDecider : public Decider {
 public:
  PolicyDecider(const PolicyBundle& bundle, Mode mode, std::uint64_t seed)
      : bundle_(bundle), mode_(mode), rng_(seed) {}

  Choice cross(const Vector& state) override;
  Choice instance(const Vector& state) override;
  Choice low(const Vector& state, const Matrix& action_features) override;

 private:
  Choice pick(const Vector& probs);

  const PolicyBundle& bundle_;
  Mode mode_;
  std::mt19937_64 rng_;
};

class UniformDecider : public Decider {
 public:
  UniformDecider(int g1_max, int g2_max, std::uint64_t seed) : g1_max_(g1_max), g2_max_(g2_max), rng_(seed) {}

  Choice cross(const Vector& state) override;
  Choice instance(const Vector& state) override;
  Choice low(const Vector& state, const Matrix& action_features) override;

 private:
  Choice uniform(int n);

  int g1_max_;
  int g2_max_;
  std::mt19937_64 rng_;
};

struct Episode {
  sampling::SyntheticSet synthetic;
  Trajectory cross{Level::cross, {}};
  Trajectory instance{Level::instance, {}};
  std::vector<Trajectory> low;
  int g1 = 0;
  std::vector<int> g2;
  UsageCounter usage;
};

// One pass of the hierarchical generation over the minority instances in
// index order. Neighbor candidates are original minority instances only.
Episode generate(Decider& decider, const sampling::NeighborIndex& neighbors, int g1_max, int g2_max);
Episode generate(const PolicyBundle& bundle, const sampling::NeighborIndex& neighbors, int g1_max, int g2_max,
                 std::uint64_t seed, Mode mode = Mode::sample);

// Writes `reward` into the final step of every non-empty trajectory.
void assign_reward(Episode& episode, double reward);

// Fits the classifier on train + synthetic, scores the validation set and
// assigns the score as terminal reward.
double reward_episode(Episode& episode, const data::SplitDataset& split, const clf::ClassifierSpec& spec,
                      metrics::Metric metric);

// ---------------------------------------------------------------- learning

struct VTraceParams {
  double gamma = 1.0;
  double rho_bar = 1.0;
  double c_bar = 1.0;
};

// v_s = V(x_s) + sum_{t>=s} gamma^{t-s} (prod_{i=s}^{t-1} c_i) rho_t (r_t + gamma V(x_{t+1}) - V(x_t)),
// with the value past the terminal step equal to zero.
Vector vtrace_targets(const Vector& rewards, const Vector& values, const Vector& pi, const Vector& mu,
                      const VTraceParams& params);

struct LossParams {
  VTraceParams vtrace;
  double entropy_coef = 0.01;
};

// Per-step quantities treated as constants by the gradient.
struct FrozenTargets {
  std::vector<Vector> rho;
  std::vector<Vector> value_targets;
  std::vector<Vector> advantages;
};

struct LossTerms {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  Index steps = 0;
};

FrozenTargets compute_targets(const HighPolicyNet& net, std::span<const Trajectory> batch, const LossParams& params);
FrozenTargets compute_targets(const LowPolicyNet& net, std::span<const Trajectory> batch, const LossParams& params);

// Sum over steps of -rho * log pi(a|s) * A + 1/2 (v - V(s))^2 - entropy_coef * H(pi(.|s)).
// Gradients are accumulated into `grads` when non-null.
LossTerms surrogate_loss(const HighPolicyNet& net, std::span<const Trajectory> batch, const FrozenTargets& frozen,
                         const LossParams& params, HighPolicyNet* grads);
LossTerms surrogate_loss(const LowPolicyNet& net, std::span<const Trajectory> batch, const FrozenTargets& frozen,
                         const LossParams& params, LowPolicyNet* grads);

template <class Net>
LossTerms impala_loss(const Net& net, std::span<const Trajectory> batch, const LossParams& params, Net& grads) {
  if (batch.empty()) throw std::invalid_argument("impala_loss: empty batch");
  return surrogate_loss(net, batch, compute_targets(net, batch, params), params, &grads);
}

}  // namespace autosmote::hrl
