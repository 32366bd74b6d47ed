#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autosmote/classifiers.hpp"
#include "autosmote/data.hpp"
#include "autosmote/metrics.hpp"
#include "autosmote/samplers.hpp"
#include "autosmote/search.hpp"

namespace autosmote::engine {

// Two-dimensional toy problem: one majority blob centred at the origin with a
// minority cluster on each side of it along the x axis.
struct ToyConfig {
  Index n_majority = 450;
  Index n_minority = 35;
  double majority_std = 1.0;
  double cluster_offset = 4.0;
  double cluster_std = 0.4;
  std::uint64_t seed = 0;
};

// When `ir` is given the minority count becomes floor(n_majority / ir).
data::Dataset make_toy(const ToyConfig& config, std::optional<double> ir = std::nullopt);

ToyConfig toy_config_from_json(const nlohmann::json& j);

enum class Method { autosmote, random_search, smote, random_over, random_under, none };

Method parse_method(const std::string& name);
std::string to_string(Method m);

struct ExperimentConfig {
  std::string dataset = "toy";  // CSV path or "toy"
  std::string label_column;
  ToyConfig toy;
  std::optional<double> target_ir;
  clf::ClassifierSpec classifier{clf::Kind::decision_tree};
  metrics::Metric metric = metrics::Metric::macro_f1;
  Method method = Method::autosmote;
  hrl::SearchConfig search;              // autosmote / random_search
  std::vector<double> ratio_grid;        // baseline samplers
  int smote_k = 5;
  std::vector<std::uint64_t> seeds{0};
  int actors = 1;
  std::filesystem::path output_dir;     // empty: no files written

  nlohmann::json echo;  // configuration as given
};

int default_actor_count();

// Validates and parses; unknown keys are rejected with ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

struct SeedReport {
  std::uint64_t seed = 0;
  double validation = 0.0;
  double test = 0.0;
  double seconds = 0.0;
  std::size_t test_reads = 0;
  std::optional<double> chosen_ratio;
  Index synthetic_rows = 0;
  nlohmann::json search;  // autosmote / random_search
  // Interpolated rows the final model was trained on (searches and SMOTE);
  // kept in memory only.
  std::optional<sampling::SyntheticSet> synthetic;
};

struct RunReport {
  std::string method;
  nlohmann::json cell;  // dataset, classifier, target_ir, metric
  std::vector<SeedReport> seeds;
  double mean_validation = 0.0;
  double mean_test = 0.0;
  double seconds = 0.0;
  nlohmann::json config;
  nlohmann::json environment;
};

RunReport run(const ExperimentConfig& config);

// Runs one seed on an already prepared split.
SeedReport run_seed(const ExperimentConfig& config, data::SplitDataset& split, std::uint64_t seed,
                    const std::filesystem::path& artifact_dir = {});

nlohmann::json to_json(const RunReport& report);
// Score fields only (no timing or environment), for reproducibility checks.
nlohmann::json score_fields(const RunReport& report);

struct RankTable {
  std::vector<std::string> methods;
  std::vector<std::string> cells;
  std::vector<std::vector<double>> ranks;  // [cell][method]
  std::map<std::string, double> average_rank;
};

// Average rank per method across cells (rank 1 = best mean test score; tied
// scores share the mean rank).
RankTable compare(const std::vector<nlohmann::json>& reports);
nlohmann::json to_json(const RankTable& table);

}  // namespace autosmote::engine
