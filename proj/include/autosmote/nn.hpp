#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "autosmote/core.hpp"

namespace autosmote::nn {

// Parameter visitors call f(data, rows, cols) once per tensor, in a fixed
// order. Flattening, Adam and checkpoints are built on that order.

struct Dense {
  Matrix weight;  // out x in
  Vector bias;

  static Dense create(Index in, Index out, std::mt19937_64& rng);

  template <class F>
  void visit(F&& f) {
    f(weight.data(), weight.rows(), weight.cols());
    f(bias.data(), bias.rows(), Index{1});
  }
  template <class F>
  void visit(F&& f) const {
    f(weight.data(), weight.rows(), weight.cols());
    f(bias.data(), bias.rows(), Index{1});
  }
};

// Affine layers with ReLU between them; ReLU after the last layer too when
// `activate_output` is set (trunks producing a representation).
struct Mlp {
  std::vector<Dense> layers;
  bool activate_output = false;

  static Mlp create(std::span<const Index> widths, bool activate_output, std::uint64_t seed);
  static Mlp create(std::initializer_list<Index> widths, bool activate_output, std::uint64_t seed) {
    return create(std::span<const Index>(widths.begin(), widths.size()), activate_output, seed);
  }

  Index input_size() const { return layers.front().weight.cols(); }
  Index output_size() const { return layers.back().weight.rows(); }

  template <class F>
  void visit(F&& f) {
    for (auto& l : layers) l.visit(f);
  }
  template <class F>
  void visit(F&& f) const {
    for (const auto& l : layers) l.visit(f);
  }
};

// Cached activations of a batched forward pass (one column per sample).
struct MlpTape {
  std::vector<Matrix> inputs;  // input of each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
};

Matrix forward(const Mlp& net, const Matrix& inputs, MlpTape* tape = nullptr);
Vector forward(const Mlp& net, const Vector& input);

// Accumulates parameter gradients into `grads` and returns d loss / d inputs.
Matrix backward(const Mlp& net, const MlpTape& tape, const Matrix& grad_output, Mlp& grads);

template <typename Derived>
Vector softmax(const Eigen::MatrixBase<Derived>& logits) {
  if (logits.size() == 0) throw std::invalid_argument("softmax: empty input");
  const double top = logits.maxCoeff();
  Vector e = (logits.derived().array() - top).exp().matrix();
  return e / e.sum();
}

Matrix softmax_columns(const Matrix& logits);

// Scores candidate actions against a state representation:
// score_j = w2 . relu(Ws h + Wa a_j + b1) + b2. Equivalent to an MLP on the
// concatenation [h; a_j]; the state half is shared across candidates.
struct ActionScorer {
  Matrix state_weight;   // H x S
  Matrix action_weight;  // H x A
  Vector hidden_bias;    // H
  Vector output_weight;  // H
  Vector output_bias;    // 1

  static ActionScorer create(Index state_dims, Index action_dims, Index hidden, std::uint64_t seed);

  template <class F>
  void visit(F&& f) {
    f(state_weight.data(), state_weight.rows(), state_weight.cols());
    f(action_weight.data(), action_weight.rows(), action_weight.cols());
    f(hidden_bias.data(), hidden_bias.rows(), Index{1});
    f(output_weight.data(), output_weight.rows(), Index{1});
    f(output_bias.data(), output_bias.rows(), Index{1});
  }
  template <class F>
  void visit(F&& f) const {
    f(state_weight.data(), state_weight.rows(), state_weight.cols());
    f(action_weight.data(), action_weight.rows(), action_weight.cols());
    f(hidden_bias.data(), hidden_bias.rows(), Index{1});
    f(output_weight.data(), output_weight.rows(), Index{1});
    f(output_bias.data(), output_bias.rows(), Index{1});
  }
};

struct ScorerTape {
  Matrix hidden_pre;  // H x n_actions
};

// `actions` holds one candidate feature vector per column.
Vector score(const ActionScorer& scorer, const Vector& state, const Matrix& actions, ScorerTape* tape = nullptr);

// Accumulates into `grads`; returns d loss / d state.
Vector backward(const ActionScorer& scorer, const Vector& state, const Matrix& actions, const ScorerTape& tape,
                const Vector& grad_scores, ActionScorer& grads);

// ---------------------------------------------------------------- parameter utilities

template <class Net>
Index parameter_count(const Net& net) {
  Index n = 0;
  net.visit([&](const double*, Index r, Index c) { n += r * c; });
  return n;
}

template <class Net>
Vector flatten(const Net& net) {
  Vector out(parameter_count(net));
  Index pos = 0;
  net.visit([&](const double* d, Index r, Index c) {
    out.segment(pos, r * c) = Eigen::Map<const Vector>(d, r * c);
    pos += r * c;
  });
  return out;
}

template <class Net>
void unflatten(Net& net, const Vector& flat) {
  if (flat.size() != parameter_count(net)) throw std::invalid_argument("unflatten: size mismatch");
  Index pos = 0;
  net.visit([&](double* d, Index r, Index c) {
    Eigen::Map<Vector>(d, r * c) = flat.segment(pos, r * c);
    pos += r * c;
  });
}

template <class Net>
Net zeros_like(const Net& net) {
  Net out = net;
  out.visit([](double* d, Index r, Index c) { Eigen::Map<Vector>(d, r * c).setZero(); });
  return out;
}

struct TensorShape {
  Index rows = 0;
  Index cols = 0;
  bool operator==(const TensorShape&) const = default;
};

template <class Net>
std::vector<TensorShape> shapes(const Net& net) {
  std::vector<TensorShape> out;
  net.visit([&](const double*, Index r, Index c) { out.push_back({r, c}); });
  return out;
}

// ---------------------------------------------------------------- Adam

struct AdamConfig {
  double learning_rate = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 40.0;  // global gradient-norm clip; <= 0 disables
};

struct AdamState {
  Vector m;
  Vector v;
  long step = 0;

  AdamState() = default;
  explicit AdamState(Index n) : m(Vector::Zero(n)), v(Vector::Zero(n)) {}
};

enum class StepStatus { applied, skipped_non_finite };

StepStatus adam_step(Vector& params, Vector grads, AdamState& state, const AdamConfig& config);

template <class Net>
StepStatus adam_step(Net& net, const Net& grads, AdamState& state, const AdamConfig& config) {
  Vector params = flatten(net);
  const auto status = adam_step(params, flatten(grads), state, config);
  if (status == StepStatus::applied) unflatten(net, params);
  return status;
}

// ---------------------------------------------------------------- checkpoints

struct CheckpointEntry {
  std::string name;
  std::vector<TensorShape> shapes;
  Vector params;
};

template <class Net>
CheckpointEntry make_entry(std::string name, const Net& net) {
  return {std::move(name), shapes(net), flatten(net)};
}

template <class Net>
void restore(Net& net, const CheckpointEntry& entry) {
  if (shapes(net) != entry.shapes) throw DataError("checkpoint '" + entry.name + "': tensor shapes differ");
  unflatten(net, entry.params);
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& path);

}  // namespace autosmote::nn
