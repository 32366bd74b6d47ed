#include "autosmote/hrl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace autosmote::hrl {

long UsageCounter::total() const { return std::accumulate(counts_.begin(), counts_.end(), 0L); }

Vector SearchState::flatten() const {
  Vector out(instance_features.size() + usage_bins.size());
  out << instance_features, usage_bins;
  return out;
}

namespace {

Vector bin_one_hot(int bin) {
  Vector v = Vector::Zero(kUsageBins);
  v(bin) = 1.0;
  return v;
}

}  // namespace

SearchState state_features(Index instance, const Matrix& minority, const UsageCounter& counter) {
  if (instance < 0 || instance >= minority.rows()) throw std::out_of_range("state_features: instance out of range");
  return {minority.row(instance).transpose(), bin_one_hot(counter.bin(instance))};
}

SearchState cross_state(const Matrix& minority) { return {minority.colwise().mean().transpose(), bin_one_hot(0)}; }

Vector low_action_features(const InterpAction& action, Index neighbor_instance, const UsageCounter& counter) {
  if (action.lambda_slot < 0 || action.lambda_slot >= kLambdaSlots) {
    throw std::out_of_range("low_action_features: lambda slot out of range");
  }
  Vector f = Vector::Zero(kActionFeatureDims);
  f(counter.bin(neighbor_instance)) = 1.0;
  f(kUsageBins + action.lambda_slot) = 1.0;
  return f;
}

Matrix low_action_matrix(std::span<const int> neighbor_bins) {
  const auto width = static_cast<Index>(neighbor_bins.size());
  Matrix a = Matrix::Zero(kActionFeatureDims, width * kLambdaSlots);
  for (Index slot = 0; slot < width; ++slot) {
    for (int l = 0; l < kLambdaSlots; ++l) {
      const Index col = slot * kLambdaSlots + l;
      a(neighbor_bins[static_cast<std::size_t>(slot)], col) = 1.0;
      a(kUsageBins + l, col) = 1.0;
    }
  }
  return a;
}

// ---------------------------------------------------------------- networks

HighPolicyNet make_high_policy(Index state_dims, std::span<const Index> hidden, Index n_actions, std::uint64_t seed) {
  std::vector<Index> widths{state_dims};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  std::mt19937_64 rng(derive_seed(seed, "heads"));
  HighPolicyNet net{nn::Mlp::create(widths, true, derive_seed(seed, "trunk")),
                    nn::Dense::create(widths.back(), n_actions, rng), nn::Dense::create(widths.back(), 1, rng)};
  return net;
}

LowPolicyNet make_low_policy(Index state_dims, std::span<const Index> hidden, Index scorer_hidden,
                             std::uint64_t seed) {
  std::vector<Index> widths{state_dims};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  std::mt19937_64 rng(derive_seed(seed, "heads"));
  LowPolicyNet net{nn::Mlp::create(widths, true, derive_seed(seed, "trunk")),
                   nn::Dense::create(widths.back(), 1, rng),
                   nn::ActionScorer::create(widths.back(), kActionFeatureDims, scorer_hidden,
                                            derive_seed(seed, "scorer"))};
  return net;
}

PolicyBundle PolicyBundle::create(const NetworkShape& shape, std::uint64_t seed) {
  if (shape.g1_max < 0 || shape.g2_max < 0) throw std::invalid_argument("PolicyBundle: negative goal bound");
  return {make_high_policy(shape.state_dims, shape.hidden, shape.g1_max + 1, derive_seed(seed, "cross")),
          make_high_policy(shape.state_dims, shape.hidden, shape.g2_max + 1, derive_seed(seed, "instance")),
          make_low_policy(shape.state_dims, shape.hidden, shape.scorer_hidden, derive_seed(seed, "low"))};
}

HighOutput evaluate(const HighPolicyNet& net, const Matrix& states) {
  const Matrix h = nn::forward(net.trunk, states);
  Matrix logits = net.policy_head.weight * h;
  logits.colwise() += net.policy_head.bias;
  const Vector values = ((net.value_head.weight * h).array() + net.value_head.bias(0)).transpose();
  return {nn::softmax_columns(logits), values};
}

Vector action_probs(const LowPolicyNet& net, const Vector& state, const Matrix& action_features) {
  const Vector h = nn::forward(net.trunk, state);
  return nn::softmax(nn::score(net.scorer, h, action_features));
}

double state_value(const LowPolicyNet& net, const Vector& state) {
  const Vector h = nn::forward(net.trunk, state);
  return net.value_head.weight.row(0).dot(h) + net.value_head.bias(0);
}

// ---------------------------------------------------------------- deciders

Choice PolicyDecider::pick(const Vector& probs) {
  Index a = 0;
  if (mode_ == Mode::greedy) {
    probs.maxCoeff(&a);
  } else {
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    double acc = 0.0;
    a = probs.size() - 1;
    for (Index i = 0; i < probs.size(); ++i) {
      acc += probs(i);
      if (u < acc) {
        a = i;
        break;
      }
    }
    // Guard against rounding selecting a zero-probability tail entry.
    while (probs(a) <= 0.0 && a > 0) --a;
  }
  return {static_cast<int>(a), probs(a)};
}

Choice PolicyDecider::cross(const Vector& state) { return pick(evaluate(bundle_.cross, Matrix(state)).probs.col(0)); }

Choice PolicyDecider::instance(const Vector& state) {
  return pick(evaluate(bundle_.instance, Matrix(state)).probs.col(0));
}

Choice PolicyDecider::low(const Vector& state, const Matrix& action_features) {
  return pick(action_probs(bundle_.low, state, action_features));
}

Choice UniformDecider::uniform(int n) {
  const int a = std::uniform_int_distribution<int>(0, n - 1)(rng_);
  return {a, 1.0 / static_cast<double>(n)};
}

Choice UniformDecider::cross(const Vector&) { return uniform(g1_max_ + 1); }
Choice UniformDecider::instance(const Vector&) { return uniform(g2_max_ + 1); }
Choice UniformDecider::low(const Vector&, const Matrix& action_features) {
  return uniform(static_cast<int>(action_features.cols()));
}

// ---------------------------------------------------------------- generation

namespace {

void check_choice(const Choice& c, int n_actions, const char* level) {
  if (c.action < 0 || c.action >= n_actions) {
    throw std::out_of_range(std::string("generate: ") + level + " action out of range");
  }
  if (!(c.prob > 0.0 && c.prob <= 1.0)) {
    throw std::domain_error(std::string("generate: ") + level + " behavior probability outside (0, 1]");
  }
}

}  // namespace

Episode generate(Decider& decider, const sampling::NeighborIndex& neighbors, int g1_max, int g2_max) {
  const Index n = neighbors.size();
  const int width = neighbors.width();
  const Matrix& points = neighbors.points;
  if (n < 2 || width < 1) throw DataError("generate: need at least 2 minority instances");

  Episode ep;
  ep.usage = UsageCounter(n);
  ep.low.reserve(static_cast<std::size_t>(n));
  ep.g2.reserve(static_cast<std::size_t>(n));

  const Vector s_cross = cross_state(points).flatten();
  const Choice c1 = decider.cross(s_cross);
  check_choice(c1, g1_max + 1, "cross");
  ep.g1 = c1.action;
  ep.cross.steps.push_back({s_cross, c1.action, c1.prob, 0.0, {}});

  std::vector<RowVector> rows;
  std::vector<int> bins(static_cast<std::size_t>(width));
  for (Index i = 0; i < n; ++i) {
    const Vector s_inst = state_features(i, points, ep.usage).flatten();
    const Choice c2 = decider.instance(s_inst);
    check_choice(c2, g2_max + 1, "instance");
    ep.g2.push_back(c2.action);
    ep.instance.steps.push_back({s_inst, c2.action, c2.prob, 0.0, {}});

    Trajectory low{Level::low, {}};
    const int goal = ep.g1 * c2.action;
    low.steps.reserve(static_cast<std::size_t>(goal));
    for (int step = 0; step < goal; ++step) {
      Vector s_low = state_features(i, points, ep.usage).flatten();
      for (int j = 0; j < width; ++j) bins[static_cast<std::size_t>(j)] = ep.usage.bin(neighbors.table(i, j));
      const Choice c = decider.low(s_low, low_action_matrix(bins));
      check_choice(c, width * kLambdaSlots, "low");
      const auto act = InterpAction::from_flat(c.action);
      const Index nb = neighbors.table(i, act.neighbor_slot);
      rows.push_back(sampling::interpolate(points.row(i), points.row(nb), act.lambda()));
      ep.synthetic.provenance.push_back({i, nb, act.lambda()});
      ep.usage.record(i, nb);
      low.steps.push_back({std::move(s_low), c.action, c.prob, 0.0, Eigen::Map<Eigen::VectorXi>(bins.data(), width)});
    }
    ep.low.push_back(std::move(low));
  }

  ep.synthetic.samples.resize(static_cast<Index>(rows.size()), points.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) ep.synthetic.samples.row(static_cast<Index>(r)) = rows[r];
  return ep;
}

Episode generate(const PolicyBundle& bundle, const sampling::NeighborIndex& neighbors, int g1_max, int g2_max,
                 std::uint64_t seed, Mode mode) {
  if (bundle.cross.n_actions() != g1_max + 1 || bundle.instance.n_actions() != g2_max + 1) {
    throw std::invalid_argument("generate: policy heads do not match the goal bounds");
  }
  PolicyDecider decider(bundle, mode, seed);
  return generate(decider, neighbors, g1_max, g2_max);
}

void assign_reward(Episode& episode, double reward) {
  auto set_final = [reward](Trajectory& t) {
    if (!t.steps.empty()) t.steps.back().reward = reward;
  };
  set_final(episode.cross);
  set_final(episode.instance);
  for (auto& t : episode.low) set_final(t);
}

double reward_episode(Episode& episode, const data::SplitDataset& split, const clf::ClassifierSpec& spec,
                      metrics::Metric metric) {
  const auto model = clf::fit(spec, sampling::augment(split.train, episode.synthetic));
  const double r = clf::evaluate(model, split.validation, metric);
  assign_reward(episode, r);
  return r;
}

// ---------------------------------------------------------------- V-trace

Vector vtrace_targets(const Vector& rewards, const Vector& values, const Vector& pi, const Vector& mu,
                      const VTraceParams& params) {
  const Index n = rewards.size();
  if (n == 0) throw std::invalid_argument("vtrace_targets: empty trajectory");
  if (values.size() != n || pi.size() != n || mu.size() != n) {
    throw std::invalid_argument("vtrace_targets: length mismatch");
  }
  if ((mu.array() <= 0.0).any()) throw std::domain_error("vtrace_targets: zero behavior probability");
  const Eigen::ArrayXd ratio = pi.array() / mu.array();
  const Eigen::ArrayXd rho = ratio.min(params.rho_bar);
  const Eigen::ArrayXd c = ratio.min(params.c_bar);
  Eigen::ArrayXd delta(n);
  for (Index t = 0; t < n; ++t) {
    const double next = t + 1 < n ? values(t + 1) : 0.0;
    delta(t) = rho(t) * (rewards(t) + params.gamma * next - values(t));
  }
  Vector v(n);
  for (Index s = 0; s < n; ++s) {
    // V_s + delta_s written as a convex mix, so rho = 1 gives r + gamma V_{s+1} exactly.
    const double next = s + 1 < n ? values(s + 1) : 0.0;
    double acc = rho(s) * (rewards(s) + params.gamma * next) + (1.0 - rho(s)) * values(s);
    double weight = params.gamma * c(s);  // gamma^{t-s} * prod c_i
    for (Index t = s + 1; t < n; ++t) {
      acc += weight * delta(t);
      weight *= params.gamma * c(t);
    }
    v(s) = acc;
  }
  return v;
}

// ---------------------------------------------------------------- losses

namespace {

Matrix stack_states(const Trajectory& t) {
  Matrix s(t.steps.front().state.size(), t.size());
  for (Index i = 0; i < t.size(); ++i) s.col(i) = t.steps[static_cast<std::size_t>(i)].state;
  return s;
}

Matrix stack_states(std::span<const Trajectory> batch, std::vector<Index>& offsets) {
  Index total = 0;
  offsets.clear();
  for (const auto& t : batch) {
    offsets.push_back(total);
    total += t.size();
  }
  Index dims = 0;
  for (const auto& t : batch) {
    if (!t.steps.empty()) {
      dims = t.steps.front().state.size();
      break;
    }
  }
  Matrix s(dims, total);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (Index i = 0; i < batch[b].size(); ++i) s.col(offsets[b] + i) = batch[b].steps[static_cast<std::size_t>(i)].state;
  }
  return s;
}

void add_trajectory_targets(const Trajectory& t, const Vector& pi, const Vector& values, const LossParams& params,
                            FrozenTargets& out) {
  const Index n = t.size();
  Vector r(n), mu(n);
  for (Index i = 0; i < n; ++i) {
    r(i) = t.steps[static_cast<std::size_t>(i)].reward;
    mu(i) = t.steps[static_cast<std::size_t>(i)].behavior_prob;
  }
  const Vector v = vtrace_targets(r, values, pi, mu, params.vtrace);
  Vector adv(n);
  for (Index i = 0; i < n; ++i) {
    const double next = i + 1 < n ? v(i + 1) : 0.0;
    adv(i) = r(i) + params.vtrace.gamma * next - values(i);
  }
  out.rho.push_back((pi.array() / mu.array()).min(params.vtrace.rho_bar).matrix());
  out.value_targets.push_back(v);
  out.advantages.push_back(adv);
}

// Log-softmax, softmax and entropy of one logit vector.
struct PolicyTerms {
  Vector log_probs;
  Vector probs;
  double entropy = 0.0;
};

PolicyTerms policy_terms(const Vector& logits) {
  const double top = logits.maxCoeff();
  const double lse = top + std::log((logits.array() - top).exp().sum());
  PolicyTerms p;
  p.log_probs = logits.array() - lse;
  p.probs = p.log_probs.array().exp();
  p.entropy = -(p.probs.array() * p.log_probs.array()).sum();
  return p;
}

// d/d logits of  -rho A log pi_a - beta H.
Vector policy_logit_grad(const PolicyTerms& p, int action, double rho_adv, double beta) {
  Vector g = rho_adv * p.probs;
  g(action) -= rho_adv;
  g.array() += beta * p.probs.array() * (p.log_probs.array() + p.entropy);
  return g;
}

void check_batch(std::span<const Trajectory> batch) {
  if (batch.empty()) throw std::invalid_argument("loss: empty batch");
  for (const auto& t : batch) {
    if (t.steps.empty()) throw std::invalid_argument("loss: empty trajectory in batch");
  }
}

}  // namespace

FrozenTargets compute_targets(const HighPolicyNet& net, std::span<const Trajectory> batch, const LossParams& params) {
  check_batch(batch);
  FrozenTargets out;
  for (const auto& t : batch) {
    const auto eval = evaluate(net, stack_states(t));
    Vector pi(t.size());
    for (Index i = 0; i < t.size(); ++i) pi(i) = eval.probs(t.steps[static_cast<std::size_t>(i)].action, i);
    add_trajectory_targets(t, pi, eval.values, params, out);
  }
  return out;
}

FrozenTargets compute_targets(const LowPolicyNet& net, std::span<const Trajectory> batch, const LossParams& params) {
  check_batch(batch);
  FrozenTargets out;
  for (const auto& t : batch) {
    const Matrix h = nn::forward(net.trunk, stack_states(t));
    const Vector values = ((net.value_head.weight * h).array() + net.value_head.bias(0)).transpose();
    Vector pi(t.size());
    for (Index i = 0; i < t.size(); ++i) {
      const auto& step = t.steps[static_cast<std::size_t>(i)];
      const Matrix actions = low_action_matrix({step.neighbor_bins.data(), static_cast<std::size_t>(step.neighbor_bins.size())});
      pi(i) = nn::softmax(nn::score(net.scorer, h.col(i), actions))(step.action);
    }
    add_trajectory_targets(t, pi, values, params, out);
  }
  return out;
}

LossTerms surrogate_loss(const HighPolicyNet& net, std::span<const Trajectory> batch, const FrozenTargets& frozen,
                         const LossParams& params, HighPolicyNet* grads) {
  check_batch(batch);
  std::vector<Index> offsets;
  const Matrix states = stack_states(batch, offsets);
  nn::MlpTape tape;
  const Matrix h = nn::forward(net.trunk, states, grads ? &tape : nullptr);
  Matrix logits = net.policy_head.weight * h;
  logits.colwise() += net.policy_head.bias;
  const RowVector values = (net.value_head.weight * h).array() + net.value_head.bias(0);

  LossTerms loss;
  Matrix dlogits(logits.rows(), logits.cols());
  RowVector dvalues(values.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (Index i = 0; i < batch[b].size(); ++i) {
      const Index col = offsets[b] + i;
      const int a = batch[b].steps[static_cast<std::size_t>(i)].action;
      const auto p = policy_terms(logits.col(col));
      const double rho_adv = frozen.rho[b](i) * frozen.advantages[b](i);
      const double diff = frozen.value_targets[b](i) - values(col);
      loss.policy += -rho_adv * p.log_probs(a);
      loss.value += 0.5 * diff * diff;
      loss.entropy += p.entropy;
      dlogits.col(col) = policy_logit_grad(p, a, rho_adv, params.entropy_coef);
      dvalues(col) = -diff;
      ++loss.steps;
    }
  }
  loss.total = loss.policy + loss.value - params.entropy_coef * loss.entropy;

  if (grads) {
    grads->policy_head.weight.noalias() += dlogits * h.transpose();
    grads->policy_head.bias += dlogits.rowwise().sum();
    grads->value_head.weight.noalias() += dvalues * h.transpose();
    grads->value_head.bias(0) += dvalues.sum();
    Matrix dh = net.policy_head.weight.transpose() * dlogits;
    dh.noalias() += net.value_head.weight.transpose() * dvalues;
    nn::backward(net.trunk, tape, dh, grads->trunk);
  }
  return loss;
}

LossTerms surrogate_loss(const LowPolicyNet& net, std::span<const Trajectory> batch, const FrozenTargets& frozen,
                         const LossParams& params, LowPolicyNet* grads) {
  check_batch(batch);
  std::vector<Index> offsets;
  const Matrix states = stack_states(batch, offsets);
  nn::MlpTape tape;
  const Matrix h = nn::forward(net.trunk, states, grads ? &tape : nullptr);
  const RowVector values = (net.value_head.weight * h).array() + net.value_head.bias(0);

  LossTerms loss;
  Matrix dh = Matrix::Zero(h.rows(), h.cols());
  RowVector dvalues(values.size());
  nn::ScorerTape scorer_tape;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (Index i = 0; i < batch[b].size(); ++i) {
      const Index col = offsets[b] + i;
      const auto& step = batch[b].steps[static_cast<std::size_t>(i)];
      const Matrix actions =
          low_action_matrix({step.neighbor_bins.data(), static_cast<std::size_t>(step.neighbor_bins.size())});
      const Vector hc = h.col(col);
      const auto p = policy_terms(nn::score(net.scorer, hc, actions, &scorer_tape));
      const double rho_adv = frozen.rho[b](i) * frozen.advantages[b](i);
      const double diff = frozen.value_targets[b](i) - values(col);
      loss.policy += -rho_adv * p.log_probs(step.action);
      loss.value += 0.5 * diff * diff;
      loss.entropy += p.entropy;
      dvalues(col) = -diff;
      if (grads) {
        const Vector dscores = policy_logit_grad(p, step.action, rho_adv, params.entropy_coef);
        dh.col(col) += nn::backward(net.scorer, hc, actions, scorer_tape, dscores, grads->scorer);
      }
      ++loss.steps;
    }
  }
  loss.total = loss.policy + loss.value - params.entropy_coef * loss.entropy;

  if (grads) {
    grads->value_head.weight.noalias() += dvalues * h.transpose();
    grads->value_head.bias(0) += dvalues.sum();
    dh.noalias() += net.value_head.weight.transpose() * dvalues;
    nn::backward(net.trunk, tape, dh, grads->trunk);
  }
  return loss;
}

}  // namespace autosmote::hrl
