#include "autosmote/search.hpp"

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <iostream>
#include <limits>
#include <memory>
#include <mutex>
#include <thread>

namespace autosmote::hrl {

void validate(const SearchConfig& config) {
  if (config.g2_max < 1) throw ConfigError("search: g2_max must be >= 1");
  if (config.neighbors < 1) throw ConfigError("search: neighbors (K) must be >= 1");
  if (config.iterations < 1) throw ConfigError("search: iterations must be >= 1");
  if (config.buffer_cross < 1 || config.buffer_instance < 1 || config.buffer_low < 1) {
    throw ConfigError("search: buffer sizes must be >= 1");
  }
  if (config.actors < 1) throw ConfigError("search: actors must be >= 1");
  if (config.g1_max < 0) throw ConfigError("search: g1_max must be >= 0");
  if (!(config.goal_scale > 0.0)) throw ConfigError("search: goal_scale must be positive");
  if (config.hidden.empty() || config.scorer_hidden < 1) throw ConfigError("search: hidden widths must be positive");
  for (Index w : config.hidden) {
    if (w < 1) throw ConfigError("search: hidden widths must be positive");
  }
}

SearchConfig resolve(SearchConfig config, const data::Dataset& train) {
  validate(config);
  if (config.g1_max == 0) {
    const double ir = train.imbalance_ratio();
    config.g1_max = std::max(1, static_cast<int>(std::ceil(config.goal_scale * ir / config.g2_max - 1e-9)));
  }
  return config;
}

void TrajectoryBuffer::push(Trajectory t) {
  if (t.steps.empty()) return;
  steps_ += t.size();
  queue_.push_back(std::move(t));
}

std::vector<Trajectory> TrajectoryBuffer::pop(Index min_steps) {
  std::vector<Trajectory> out;
  Index taken = 0;
  while (taken < min_steps && head_ < queue_.size()) {
    taken += queue_[head_].size();
    out.push_back(std::move(queue_[head_]));
    ++head_;
  }
  steps_ -= taken;
  if (head_ == queue_.size()) {
    queue_.clear();
    head_ = 0;
  } else if (head_ > 64 && head_ * 2 > queue_.size()) {
    queue_.erase(queue_.begin(), queue_.begin() + static_cast<std::ptrdiff_t>(head_));
    head_ = 0;
  }
  return out;
}

double final_test_score(const data::SplitDataset& split, const sampling::SyntheticSet& synthetic,
                        const clf::ClassifierSpec& spec, metrics::Metric metric) {
  const auto model = clf::fit(spec, sampling::augment(split.train, synthetic));
  return clf::evaluate(model, split.test.read(), metric);
}

namespace {

struct Outcome {
  Episode episode;
  double score = 0.0;
  bool failed = false;
};

class Learner {
 public:
  Learner(PolicyBundle bundle, const SearchConfig& config)
      : bundle_(std::move(bundle)),
        config_(config),
        cross_adam_(nn::parameter_count(bundle_.cross)),
        instance_adam_(nn::parameter_count(bundle_.instance)),
        low_adam_(nn::parameter_count(bundle_.low)) {}

  const PolicyBundle& bundle() const { return bundle_; }
  const UpdateCounts& counts() const { return counts_; }

  // Returns true when any policy changed.
  bool ingest(Episode& ep) {
    cross_buf_.push(std::move(ep.cross));
    instance_buf_.push(std::move(ep.instance));
    for (auto& t : ep.low) low_buf_.push(std::move(t));
    bool changed = false;
    changed |= update(bundle_.cross, cross_adam_, cross_buf_, config_.buffer_cross, counts_.cross);
    changed |= update(bundle_.instance, instance_adam_, instance_buf_, config_.buffer_instance, counts_.instance);
    changed |= update(bundle_.low, low_adam_, low_buf_, config_.buffer_low, counts_.low);
    return changed;
  }

 private:
  template <class Net>
  bool update(Net& net, nn::AdamState& adam, TrajectoryBuffer& buffer, Index threshold, int& counter) {
    if (buffer.steps() < threshold) return false;
    const auto batch = buffer.pop(threshold);
    Net grads = nn::zeros_like(net);
    const auto loss = impala_loss(net, std::span<const Trajectory>(batch), config_.loss, grads);
    if (!std::isfinite(loss.total) || nn::adam_step(net, grads, adam, config_.adam) != nn::StepStatus::applied) {
      std::cerr << "autosmote: non-finite loss or gradient, update skipped\n";
      ++counts_.skipped;
      return false;
    }
    ++counter;
    return true;
  }

  PolicyBundle bundle_;
  SearchConfig config_;
  nn::AdamState cross_adam_, instance_adam_, low_adam_;
  TrajectoryBuffer cross_buf_, instance_buf_, low_buf_;
  UpdateCounts counts_;
};

template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  bool push(T item) {
    std::unique_lock lock(mutex_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  T pop() {
    std::unique_lock lock(mutex_);
    not_empty_.wait(lock, [&] { return !items_.empty(); });
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mutex_);
    closed_ = true;
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
  bool closed_ = false;
  std::mutex mutex_;
  std::condition_variable not_full_, not_empty_;
};

Outcome produce(const PolicyBundle* bundle, const sampling::NeighborIndex& neighbors, const SearchConfig& config,
                const data::SplitDataset& split, const clf::ClassifierSpec& spec, metrics::Metric metric,
                std::uint64_t episode_seed) {
  Outcome out;
  if (bundle) {
    out.episode = generate(*bundle, neighbors, config.g1_max, config.g2_max, episode_seed, Mode::sample);
  } else {
    UniformDecider decider(config.g1_max, config.g2_max, episode_seed);
    out.episode = generate(decider, neighbors, config.g1_max, config.g2_max);
  }
  try {
    out.score = reward_episode(out.episode, split, spec, metric);
  } catch (const std::exception& e) {
    std::cerr << "autosmote: iteration failed: " << e.what() << '\n';
    out.failed = true;
  }
  return out;
}

SearchResult run_search(const data::SplitDataset& split, const clf::ClassifierSpec& spec, metrics::Metric metric,
                        const SearchConfig& raw_config, bool learn) {
  const SearchConfig config = resolve(raw_config, split.train);
  const auto neighbors = sampling::knn_minority(split.train, config.neighbors);
  NetworkShape shape{split.train.dims() + kUsageBins, config.g1_max, config.g2_max, config.hidden,
                     config.scorer_hidden};
  Learner learner(PolicyBundle::create(shape, derive_seed(config.seed, "policy-init")), config);
  const std::uint64_t action_root = derive_seed(config.seed, "actions");

  SearchResult result;
  result.config = config;
  result.best_validation = -std::numeric_limits<double>::infinity();
  auto consume = [&](int iteration, Outcome& o) {
    IterationRecord rec{iteration, o.score, result.best_validation, o.episode.synthetic.size(), o.episode.g1,
                        o.failed};
    if (!o.failed) {
      if (o.score > result.best_validation) {
        result.best_validation = o.score;
        result.best_iteration = iteration;
        result.best_synthetic = o.episode.synthetic;
      }
      rec.best = result.best_validation;
    }
    result.history.push_back(rec);
    if (learn && !o.failed) return learner.ingest(o.episode);
    return false;
  };

  if (config.actors == 1) {
    for (int it = 0; it < config.iterations; ++it) {
      auto o = produce(learn ? &learner.bundle() : nullptr, neighbors, config, split, spec, metric,
                       derive_seed(action_root, "episode-" + std::to_string(it)));
      consume(it, o);
    }
  } else {
    BoundedQueue<Outcome> queue(static_cast<std::size_t>(config.actors));
    std::mutex snapshot_mutex;
    auto snapshot = std::make_shared<const PolicyBundle>(learner.bundle());
    std::atomic<bool> stop{false};
    std::vector<std::thread> actors;
    for (int a = 0; a < config.actors; ++a) {
      actors.emplace_back([&, a] {
        for (long k = 0; !stop.load(); ++k) {
          std::shared_ptr<const PolicyBundle> snap;
          {
            std::lock_guard lock(snapshot_mutex);
            snap = snapshot;
          }
          const auto seed = derive_seed(action_root, "actor-" + std::to_string(a) + "-" + std::to_string(k));
          Outcome o;
          try {
            o = produce(learn ? snap.get() : nullptr, neighbors, config, split, spec, metric, seed);
          } catch (const std::exception& e) {
            std::cerr << "autosmote: actor " << a << " failed: " << e.what() << '\n';
            o.failed = true;
          }
          if (!queue.push(std::move(o))) break;
        }
      });
    }
    for (int it = 0; it < config.iterations; ++it) {
      auto o = queue.pop();
      if (consume(it, o)) {
        auto next = std::make_shared<const PolicyBundle>(learner.bundle());
        std::lock_guard lock(snapshot_mutex);
        snapshot = std::move(next);
      }
    }
    stop.store(true);
    queue.close();
    for (auto& t : actors) t.join();
  }

  if (result.best_iteration < 0) throw std::runtime_error("search: every iteration failed");
  result.updates = learner.counts();
  if (learn) result.policies = learner.bundle();
  result.test_score = final_test_score(split, result.best_synthetic, spec, metric);
  return result;
}

}  // namespace

SearchResult train_search(const data::SplitDataset& split, const clf::ClassifierSpec& spec, metrics::Metric metric,
                          const SearchConfig& config) {
  return run_search(split, spec, metric, config, true);
}

SearchResult random_search(const data::SplitDataset& split, const clf::ClassifierSpec& spec, metrics::Metric metric,
                           const SearchConfig& config) {
  return run_search(split, spec, metric, config, false);
}

nlohmann::json to_json(const SearchConfig& c) {
  return {{"g1_max", c.g1_max},
          {"g2_max", c.g2_max},
          {"goal_scale", c.goal_scale},
          {"neighbors", c.neighbors},
          {"iterations", c.iterations},
          {"buffer_cross", c.buffer_cross},
          {"buffer_instance", c.buffer_instance},
          {"buffer_low", c.buffer_low},
          {"gamma", c.loss.vtrace.gamma},
          {"rho_bar", c.loss.vtrace.rho_bar},
          {"c_bar", c.loss.vtrace.c_bar},
          {"entropy_coef", c.loss.entropy_coef},
          {"learning_rate", c.adam.learning_rate},
          {"clip_norm", c.adam.clip_norm},
          {"hidden", c.hidden},
          {"scorer_hidden", c.scorer_hidden},
          {"actors", c.actors}};
}

SearchConfig search_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("search parameters must be an object");
  SearchConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "g1_max") c.g1_max = value.get<int>();
      else if (key == "g2_max") c.g2_max = value.get<int>();
      else if (key == "goal_scale") c.goal_scale = value.get<double>();
      else if (key == "neighbors") c.neighbors = value.get<int>();
      else if (key == "iterations") c.iterations = value.get<int>();
      else if (key == "buffer_cross") c.buffer_cross = value.get<Index>();
      else if (key == "buffer_instance") c.buffer_instance = value.get<Index>();
      else if (key == "buffer_low") c.buffer_low = value.get<Index>();
      else if (key == "gamma") c.loss.vtrace.gamma = value.get<double>();
      else if (key == "rho_bar") c.loss.vtrace.rho_bar = value.get<double>();
      else if (key == "c_bar") c.loss.vtrace.c_bar = value.get<double>();
      else if (key == "entropy_coef") c.loss.entropy_coef = value.get<double>();
      else if (key == "learning_rate") c.adam.learning_rate = value.get<double>();
      else if (key == "clip_norm") c.adam.clip_norm = value.get<double>();
      else if (key == "hidden") c.hidden = value.get<std::vector<Index>>();
      else if (key == "scorer_hidden") c.scorer_hidden = value.get<Index>();
      else if (key == "actors") c.actors = value.get<int>();
      else throw ConfigError("unknown search parameter '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("search parameter '" + key + "': " + e.what());
    }
  }
  validate(c);
  return c;
}

nlohmann::json to_json(const SearchResult& r) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : r.history) {
    history.push_back({{"iteration", h.iteration},
                       {"score", h.failed ? nlohmann::json(nullptr) : nlohmann::json(h.score)},
                       {"best", h.best},
                       {"synthetic", h.synthetic},
                       {"g1", h.g1}});
  }
  nlohmann::json j{{"best_validation", r.best_validation},
                   {"best_iteration", r.best_iteration},
                   {"best_synthetic_count", r.best_synthetic.size()},
                   {"updates",
                    {{"cross", r.updates.cross},
                     {"instance", r.updates.instance},
                     {"low", r.updates.low},
                     {"skipped", r.updates.skipped}}},
                   {"config", to_json(r.config)},
                   {"seed", r.config.seed},
                   {"history", std::move(history)}};
  if (r.test_score) j["test_score"] = *r.test_score;
  return j;
}

std::vector<nn::CheckpointEntry> checkpoint_entries(const PolicyBundle& bundle) {
  return {nn::make_entry("cross", bundle.cross), nn::make_entry("instance", bundle.instance),
          nn::make_entry("low", bundle.low)};
}

}  // namespace autosmote::hrl
