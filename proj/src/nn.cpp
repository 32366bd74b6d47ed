#include "autosmote/nn.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

namespace autosmote::nn {

namespace {

void fill_uniform(double* data, Index n, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  for (Index i = 0; i < n; ++i) data[i] = u(rng);
}

}  // namespace

Dense Dense::create(Index in, Index out, std::mt19937_64& rng) {
  Dense d{Matrix(out, in), Vector(out)};
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  fill_uniform(d.weight.data(), d.weight.size(), bound, rng);
  fill_uniform(d.bias.data(), d.bias.size(), bound, rng);
  return d;
}

Mlp Mlp::create(std::span<const Index> widths, bool activate_output, std::uint64_t seed) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp: need at least input and output widths");
  std::mt19937_64 rng(seed);
  Mlp net;
  net.activate_output = activate_output;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    if (widths[i] < 1 || widths[i + 1] < 1) throw std::invalid_argument("Mlp: widths must be positive");
    net.layers.push_back(Dense::create(widths[i], widths[i + 1], rng));
  }
  return net;
}

Matrix forward(const Mlp& net, const Matrix& inputs, MlpTape* tape) {
  if (inputs.rows() != net.input_size()) throw std::invalid_argument("forward: input dimension mismatch");
  if (!inputs.allFinite()) throw std::domain_error("forward: non-finite input");
  if (tape) {
    tape->inputs.clear();
    tape->pre.clear();
  }
  Matrix h = inputs;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    Matrix z = layer.weight * h;
    z.colwise() += layer.bias;
    const bool relu = l + 1 < net.layers.size() || net.activate_output;
    if (tape) {
      tape->inputs.push_back(std::move(h));
      tape->pre.push_back(z);
    }
    h = relu ? Matrix(z.cwiseMax(0.0)) : std::move(z);
  }
  return h;
}

Vector forward(const Mlp& net, const Vector& input) { return forward(net, Matrix(input)).col(0); }

Matrix backward(const Mlp& net, const MlpTape& tape, const Matrix& grad_output, Mlp& grads) {
  Matrix g = grad_output;
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const bool relu = l + 1 < net.layers.size() || net.activate_output;
    if (relu) g = (tape.pre[l].array() > 0.0).select(g, 0.0);
    grads.layers[l].weight.noalias() += g * tape.inputs[l].transpose();
    grads.layers[l].bias += g.rowwise().sum();
    g = net.layers[l].weight.transpose() * g;
  }
  return g;
}

Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Index c = 0; c < logits.cols(); ++c) out.col(c) = softmax(logits.col(c));
  return out;
}

ActionScorer ActionScorer::create(Index state_dims, Index action_dims, Index hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ActionScorer s{Matrix(hidden, state_dims), Matrix(hidden, action_dims), Vector(hidden), Vector(hidden), Vector(1)};
  const double b1 = 1.0 / std::sqrt(static_cast<double>(state_dims + action_dims));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  fill_uniform(s.state_weight.data(), s.state_weight.size(), b1, rng);
  fill_uniform(s.action_weight.data(), s.action_weight.size(), b1, rng);
  fill_uniform(s.hidden_bias.data(), s.hidden_bias.size(), b1, rng);
  fill_uniform(s.output_weight.data(), s.output_weight.size(), b2, rng);
  fill_uniform(s.output_bias.data(), 1, b2, rng);
  return s;
}

Vector score(const ActionScorer& scorer, const Vector& state, const Matrix& actions, ScorerTape* tape) {
  if (state.size() != scorer.state_weight.cols() || actions.rows() != scorer.action_weight.cols()) {
    throw std::invalid_argument("score: dimension mismatch");
  }
  const Vector shared = scorer.state_weight * state + scorer.hidden_bias;
  Matrix pre = scorer.action_weight * actions;
  pre.colwise() += shared;
  Vector out = (pre.cwiseMax(0.0).transpose() * scorer.output_weight).array() + scorer.output_bias(0);
  if (tape) tape->hidden_pre = std::move(pre);
  return out;
}

Vector backward(const ActionScorer& scorer, const Vector& state, const Matrix& actions, const ScorerTape& tape,
                const Vector& grad_scores, ActionScorer& grads) {
  const auto& pre = tape.hidden_pre;
  grads.output_weight.noalias() += pre.cwiseMax(0.0) * grad_scores;
  grads.output_bias(0) += grad_scores.sum();
  // d pre = (w2 g^T) masked by relu'
  const Matrix dpre = (pre.array() > 0.0).select(scorer.output_weight * grad_scores.transpose(), 0.0);
  const Vector dshared = dpre.rowwise().sum();
  grads.action_weight.noalias() += dpre * actions.transpose();
  grads.hidden_bias += dshared;
  grads.state_weight.noalias() += dshared * state.transpose();
  return scorer.state_weight.transpose() * dshared;
}

StepStatus adam_step(Vector& params, Vector grads, AdamState& state, const AdamConfig& config) {
  if (grads.size() != params.size()) throw std::invalid_argument("adam_step: gradient size mismatch");
  if (state.m.size() != params.size()) state = AdamState(params.size());
  if (!grads.allFinite()) return StepStatus::skipped_non_finite;
  if (config.clip_norm > 0.0) {
    const double norm = grads.norm();
    if (norm > config.clip_norm) grads *= config.clip_norm / norm;
  }
  ++state.step;
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grads;
  state.v = config.beta2 * state.v + (1.0 - config.beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  params.array() -= config.learning_rate * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + config.epsilon);
  return StepStatus::applied;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointEntry>& entries) {
  nlohmann::json j;
  j["format"] = "autosmote-checkpoint";
  j["version"] = 1;
  auto& nets = j["networks"] = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json net;
    net["name"] = e.name;
    auto& shp = net["shapes"] = nlohmann::json::array();
    for (const auto& s : e.shapes) shp.push_back({s.rows, s.cols});
    net["params"] = std::vector<double>(e.params.data(), e.params.data() + e.params.size());
    nets.push_back(std::move(net));
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  out << j.dump();
}

std::vector<CheckpointEntry> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  if (j.value("format", "") != "autosmote-checkpoint" || j.value("version", 0) != 1) {
    throw DataError("checkpoint: unsupported format or version");
  }
  std::vector<CheckpointEntry> entries;
  for (const auto& net : j.at("networks")) {
    CheckpointEntry e;
    e.name = net.at("name").get<std::string>();
    Index total = 0;
    for (const auto& s : net.at("shapes")) {
      e.shapes.push_back({s.at(0).get<Index>(), s.at(1).get<Index>()});
      total += e.shapes.back().rows * e.shapes.back().cols;
    }
    auto params = net.at("params").get<std::vector<double>>();
    if (static_cast<Index>(params.size()) != total) throw DataError("checkpoint '" + e.name + "': size mismatch");
    e.params = Eigen::Map<Vector>(params.data(), total);
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace autosmote::nn
