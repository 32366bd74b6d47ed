#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "autosmote/classifiers.hpp"
#include "autosmote/data.hpp"
#include "autosmote/hrl.hpp"
#include "autosmote/metrics.hpp"
#include "autosmote/nn.hpp"
#include "autosmote/samplers.hpp"

namespace autosmote::hrl {

struct SearchConfig {
  int g1_max = 0;            // 0: ceil(goal_scale * IR / g2_max)
  int g2_max = 10;
  double goal_scale = 4.0;   // g1_max * g2_max ~= goal_scale * IR
  int neighbors = 30;        // K
  int iterations = 1000;     // I, one reward evaluation each
  Index buffer_cross = 2;
  Index buffer_instance = 300;
  Index buffer_low = 300;
  LossParams loss;
  nn::AdamConfig adam;
  std::vector<Index> hidden{128, 128};
  Index scorer_hidden = 128;
  int actors = 1;
  std::uint64_t seed = 0;
};

// Throws ConfigError on out-of-range settings.
void validate(const SearchConfig& config);

// Validates, then resolves g1_max from the training imbalance ratio when it is left at 0.
SearchConfig resolve(SearchConfig config, const data::Dataset& train);

struct IterationRecord {
  int iteration = 0;
  double score = 0.0;
  double best = 0.0;
  Index synthetic = 0;
  int g1 = 0;
  bool failed = false;
};

struct UpdateCounts {
  int cross = 0;
  int instance = 0;
  int low = 0;
  int skipped = 0;
};

struct SearchResult {
  sampling::SyntheticSet best_synthetic;
  double best_validation = 0.0;
  int best_iteration = -1;
  std::optional<double> test_score;
  std::vector<IterationRecord> history;
  UpdateCounts updates;
  SearchConfig config;
  std::optional<PolicyBundle> policies;  // learned search only
};

// Buffered actor-critic search over the hierarchical generation process. The
// synthetic set with the best validation score is kept; the classifier is
// then retrained on it and evaluated once on the held-out partition.
SearchResult train_search(const data::SplitDataset& split, const clf::ClassifierSpec& spec, metrics::Metric metric,
                          const SearchConfig& config);

// Same loop and decision space with every decision uniformly random.
SearchResult random_search(const data::SplitDataset& split, const clf::ClassifierSpec& spec, metrics::Metric metric,
                           const SearchConfig& config);

// Trains on train + synthetic and reads the held-out partition once.
double final_test_score(const data::SplitDataset& split, const sampling::SyntheticSet& synthetic,
                        const clf::ClassifierSpec& spec, metrics::Metric metric);

// FIFO of whole trajectories for one policy level.
class TrajectoryBuffer {
 public:
  void push(Trajectory t);
  Index steps() const { return steps_; }
  std::size_t size() const { return queue_.size(); }
  // Oldest trajectories until at least `min_steps` steps have been taken.
  std::vector<Trajectory> pop(Index min_steps);

 private:
  std::vector<Trajectory> queue_;
  std::size_t head_ = 0;
  Index steps_ = 0;
};

nlohmann::json to_json(const SearchConfig& config);
SearchConfig search_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SearchResult& result);

std::vector<nn::CheckpointEntry> checkpoint_entries(const PolicyBundle& bundle);

}  // namespace autosmote::hrl
