#include "autosmote/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <set>
#include <thread>

#include "autosmote/samplers.hpp"

namespace autosmote::engine {

using nlohmann::json;

data::Dataset make_toy(const ToyConfig& config, std::optional<double> ir) {
  if (config.n_majority < 1) throw ConfigError("toy: n_majority must be >= 1");
  if (!(config.majority_std > 0.0) || !(config.cluster_std > 0.0)) throw ConfigError("toy: spreads must be positive");
  Index n_min = config.n_minority;
  if (ir) {
    if (!(*ir > 0.0)) throw ConfigError("toy: IR must be positive");
    n_min = static_cast<Index>(std::floor(static_cast<double>(config.n_majority) / *ir + 1e-9));
  }
  if (n_min < 2) throw ConfigError("toy: need at least 2 minority instances");

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(config.n_majority + n_min, 2);
  Labels y(config.n_majority + n_min);
  for (Index i = 0; i < config.n_majority; ++i) {
    x(i, 0) = config.majority_std * normal(rng);
    x(i, 1) = config.majority_std * normal(rng);
    y(i) = kMajority;
  }
  for (Index j = 0; j < n_min; ++j) {
    const Index i = config.n_majority + j;
    const double centre = j % 2 == 0 ? -config.cluster_offset : config.cluster_offset;
    x(i, 0) = centre + config.cluster_std * normal(rng);
    x(i, 1) = config.cluster_std * normal(rng);
    y(i) = kMinority;
  }
  return data::Dataset(std::move(x), std::move(y));
}

ToyConfig toy_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("toy: expected an object");
  ToyConfig t;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "n_majority") t.n_majority = value.get<Index>();
      else if (key == "n_minority") t.n_minority = value.get<Index>();
      else if (key == "majority_std") t.majority_std = value.get<double>();
      else if (key == "cluster_offset") t.cluster_offset = value.get<double>();
      else if (key == "cluster_std") t.cluster_std = value.get<double>();
      else if (key == "seed") t.seed = value.get<std::uint64_t>();
      else throw ConfigError("toy: unknown key '" + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError("toy." + key + ": " + e.what());
    }
  }
  return t;
}

Method parse_method(const std::string& name) {
  if (name == "autosmote") return Method::autosmote;
  if (name == "random_search") return Method::random_search;
  if (name == "smote") return Method::smote;
  if (name == "random_over") return Method::random_over;
  if (name == "random_under") return Method::random_under;
  if (name == "none") return Method::none;
  throw ConfigError("unknown method '" + name + "'");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::autosmote: return "autosmote";
    case Method::random_search: return "random_search";
    case Method::smote: return "smote";
    case Method::random_over: return "random_over";
    case Method::random_under: return "random_under";
    case Method::none: return "none";
  }
  return "unknown";
}

int default_actor_count() {
  const unsigned cores = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(cores, 1U, 40U));
}

namespace {

bool is_search(Method m) { return m == Method::autosmote || m == Method::random_search; }

sampling::SamplerKind sampler_of(Method m) {
  switch (m) {
    case Method::smote: return sampling::SamplerKind::smote;
    case Method::random_over: return sampling::SamplerKind::random_over;
    case Method::random_under: return sampling::SamplerKind::random_under;
    default: return sampling::SamplerKind::none;
  }
}

clf::ClassifierSpec classifier_from_json(const json& j) {
  if (j.is_string()) return clf::ClassifierSpec(clf::parse_kind(j.get<std::string>()));
  if (!j.is_object()) throw ConfigError("classifier: expected a name or an object");
  std::string kind;
  std::map<std::string, double> params;
  for (const auto& [key, value] : j.items()) {
    if (key == "kind") {
      kind = value.get<std::string>();
    } else if (key == "params") {
      for (const auto& [name, v] : value.items()) {
        if (!v.is_number()) throw ConfigError("classifier.params." + name + ": expected a number");
        params[name] = v.get<double>();
      }
    } else {
      throw ConfigError("classifier: unknown key '" + key + "'");
    }
  }
  if (kind.empty()) throw ConfigError("classifier: 'kind' is required");
  return clf::ClassifierSpec(clf::parse_kind(kind), std::move(params));
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  ExperimentConfig c;
  c.echo = j;
  c.actors = default_actor_count();
  json method_params = json::object();
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "dataset") c.dataset = value.get<std::string>();
      else if (key == "label_column") c.label_column = value.get<std::string>();
      else if (key == "toy") c.toy = toy_config_from_json(value);
      else if (key == "target_ir") c.target_ir = value.is_null() ? std::nullopt : std::optional(value.get<double>());
      else if (key == "classifier") c.classifier = classifier_from_json(value);
      else if (key == "metric") c.metric = metrics::parse_metric(value.get<std::string>());
      else if (key == "method") c.method = parse_method(value.get<std::string>());
      else if (key == "method_params") method_params = value;
      else if (key == "seeds") c.seeds = value.get<std::vector<std::uint64_t>>();
      else if (key == "actors") c.actors = value.get<int>();
      else if (key == "output_dir") c.output_dir = value.get<std::string>();
      else throw ConfigError("config: unknown key '" + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError("config." + key + ": " + e.what());
    }
  }
  if (c.dataset != "toy" && c.label_column.empty()) throw ConfigError("config: label_column is required for CSV data");
  if (c.seeds.empty()) throw ConfigError("config: seeds must be non-empty");
  if (c.actors < 1) throw ConfigError("config: actors must be >= 1");
  if (c.target_ir && !(*c.target_ir > 0.0)) throw ConfigError("config: target_ir must be positive");
  if (!method_params.is_object()) throw ConfigError("config: method_params must be an object");

  if (is_search(c.method)) {
    c.search = hrl::search_config_from_json(method_params);
    if (!method_params.contains("actors")) c.search.actors = c.actors;
    hrl::validate(c.search);
  } else {
    c.ratio_grid = sampling::default_ratio_grid();
    for (const auto& [key, value] : method_params.items()) {
      try {
        if (key == "grid" && c.method != Method::none) c.ratio_grid = value.get<std::vector<double>>();
        else if (key == "k" && c.method == Method::smote) c.smote_k = value.get<int>();
        else throw ConfigError("method_params: unknown key '" + key + "' for method " + to_string(c.method));
      } catch (const json::exception& e) {
        throw ConfigError("method_params." + key + ": " + e.what());
      }
    }
    if (c.ratio_grid.empty()) throw ConfigError("method_params.grid must be non-empty");
    for (double r : c.ratio_grid) {
      if (!(r > 0.0 && r <= 1.0)) throw ConfigError("method_params.grid: ratios must lie in (0, 1]");
    }
    if (c.smote_k < 1) throw ConfigError("method_params.k must be >= 1");
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config: " + std::string(e.what()));
  }
  auto config = config_from_json(j);
  if (const char* env = std::getenv("AUTOSMOTE_OUTPUT_DIR"); env && *env) config.output_dir = env;
  // Relative dataset paths resolve against the config file's directory.
  if (config.dataset != "toy" && std::filesystem::path(config.dataset).is_relative() &&
      !std::filesystem::exists(config.dataset)) {
    config.dataset = (path.parent_path() / config.dataset).string();
  }
  return config;
}

namespace {

json environment_fingerprint() {
  return {{"compiler", __VERSION__},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"hardware_concurrency", std::thread::hardware_concurrency()},
#ifdef NDEBUG
          {"assertions", false}
#else
          {"assertions", true}
#endif
  };
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

SeedReport run_seed(const ExperimentConfig& config, data::SplitDataset& split, std::uint64_t seed,
                    const std::filesystem::path& artifact_dir) {
  const auto start = std::chrono::steady_clock::now();
  split.test.reset_audit();
  const auto spec = config.classifier.with_seed(derive_seed(seed, "classifier"));
  SeedReport report;
  report.seed = seed;
  const std::string tag = "seed" + std::to_string(seed);

  if (is_search(config.method)) {
    auto search_config = config.search;
    search_config.seed = derive_seed(seed, "search");
    const auto result = config.method == Method::autosmote ? hrl::train_search(split, spec, config.metric, search_config)
                                                           : hrl::random_search(split, spec, config.metric, search_config);
    report.validation = result.best_validation;
    report.test = *result.test_score;
    report.synthetic_rows = result.best_synthetic.size();
    report.search = hrl::to_json(result);
    report.synthetic = result.best_synthetic;
    if (!artifact_dir.empty()) {
      sampling::write_synthetic_csv(result.best_synthetic, artifact_dir / ("synthetic_" + tag + ".csv"));
      std::ofstream(artifact_dir / ("search_" + tag + ".json")) << report.search.dump(2);
      if (result.policies) {
        nn::save_checkpoint(artifact_dir / ("policies_" + tag + ".json"), hrl::checkpoint_entries(*result.policies));
      }
    }
  } else if (config.method == Method::none) {
    const auto model = clf::fit(spec, split.train);
    report.validation = clf::evaluate(model, split.validation, config.metric);
    report.test = clf::evaluate(model, split.test.read(), config.metric);
  } else {
    const auto grid = sampling::grid_search_ratio(sampler_of(config.method), split, spec, config.metric,
                                                  config.ratio_grid, derive_seed(seed, "baseline"), config.smote_k);
    const auto model = clf::fit(spec, grid.resampled.train);
    report.validation = grid.best_score;
    report.test = clf::evaluate(model, split.test.read(), config.metric);
    report.chosen_ratio = grid.best_ratio;
    report.synthetic_rows = grid.resampled.train.rows() - split.train.rows();
    report.synthetic = grid.resampled.synthetic;
    if (grid.resampled.synthetic && !artifact_dir.empty()) {
      sampling::write_synthetic_csv(*grid.resampled.synthetic, artifact_dir / ("synthetic_" + tag + ".csv"));
    }
  }
  report.test_reads = split.test.reads();
  report.seconds = seconds_since(start);
  return report;
}

RunReport run(const ExperimentConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  std::optional<data::RawTable> table;
  std::optional<data::Dataset> toy;
  if (config.dataset == "toy") {
    toy = make_toy(config.toy);
  } else {
    table = data::load_csv(config.dataset, config.label_column);
  }
  if (!config.output_dir.empty()) std::filesystem::create_directories(config.output_dir);

  RunReport report;
  report.method = to_string(config.method);
  report.cell = {{"dataset", config.dataset == "toy" ? std::string("toy") : std::filesystem::path(config.dataset).filename().string()},
                 {"classifier", clf::to_string(config.classifier.kind())},
                 {"target_ir", config.target_ir ? json(*config.target_ir) : json(nullptr)},
                 {"metric", metrics::to_string(config.metric)}};
  report.config = config.echo;
  report.environment = environment_fingerprint();
  for (auto seed : config.seeds) {
    auto split = toy ? data::prepare(*toy, config.target_ir, seed) : data::prepare(*table, config.target_ir, seed);
    report.seeds.push_back(run_seed(config, split, seed, config.output_dir));
  }
  for (const auto& s : report.seeds) {
    report.mean_validation += s.validation;
    report.mean_test += s.test;
  }
  report.mean_validation /= static_cast<double>(report.seeds.size());
  report.mean_test /= static_cast<double>(report.seeds.size());
  report.seconds = seconds_since(start);
  if (!config.output_dir.empty()) {
    std::ofstream out(config.output_dir / "report.json");
    if (!out) throw std::runtime_error("cannot write report to '" + config.output_dir.string() + "'");
    out << to_json(report).dump(2) << '\n';
  }
  return report;
}

json score_fields(const RunReport& report) {
  json seeds = json::array();
  for (const auto& s : report.seeds) {
    json entry{{"seed", s.seed}, {"validation", s.validation}, {"test", s.test}, {"test_reads", s.test_reads},
               {"synthetic_rows", s.synthetic_rows}};
    if (s.chosen_ratio) entry["chosen_ratio"] = *s.chosen_ratio;
    if (!s.search.is_null()) {
      json history = json::array();
      for (const auto& h : s.search.at("history")) history.push_back(h.at("score"));
      entry["history"] = std::move(history);
    }
    seeds.push_back(std::move(entry));
  }
  return {{"method", report.method},
          {"cell", report.cell},
          {"mean_validation", report.mean_validation},
          {"mean_test", report.mean_test},
          {"seeds", std::move(seeds)}};
}

json to_json(const RunReport& report) {
  json j = score_fields(report);
  json seeds = json::array();
  for (const auto& s : report.seeds) {
    json entry{{"seed", s.seed},
               {"validation", s.validation},
               {"test", s.test},
               {"test_reads", s.test_reads},
               {"synthetic_rows", s.synthetic_rows},
               {"seconds", s.seconds}};
    if (s.chosen_ratio) entry["chosen_ratio"] = *s.chosen_ratio;
    if (!s.search.is_null()) entry["search"] = s.search;
    seeds.push_back(std::move(entry));
  }
  j["seeds"] = std::move(seeds);
  j["format"] = "autosmote-report";
  j["version"] = 1;
  j["seconds"] = report.seconds;
  j["config"] = report.config;
  j["environment"] = report.environment;
  return j;
}

RankTable compare(const std::vector<json>& reports) {
  if (reports.size() < 2) throw std::invalid_argument("compare: need at least two reports");
  // cell key -> method -> score
  std::map<std::string, std::map<std::string, double>> scores;
  std::set<std::string> methods;
  for (const auto& r : reports) {
    std::string method, cell;
    double score = 0.0;
    try {
      method = r.at("method").get<std::string>();
      cell = r.at("cell").dump();
      score = r.at("mean_test").get<double>();
    } catch (const json::exception& e) {
      throw DataError(std::string("compare: malformed report: ") + e.what());
    }
    if (!scores[cell].emplace(method, score).second) {
      throw DataError("compare: duplicate report for method '" + method + "' in cell " + cell);
    }
    methods.insert(method);
  }
  if (methods.size() < 2) throw std::invalid_argument("compare: need at least two methods");
  RankTable table;
  table.methods.assign(methods.begin(), methods.end());
  for (const auto& [cell, by_method] : scores) {
    if (by_method.size() != methods.size()) {
      throw DataError("compare: cell " + cell + " is not covered by every method");
    }
    table.cells.push_back(cell);
    std::vector<double> ranks;
    for (const auto& m : table.methods) {
      const double s = by_method.at(m);
      double better = 0, equal = 0;
      for (const auto& [other, t] : by_method) {
        if (t > s) ++better;
        else if (t == s) ++equal;
      }
      // Positions better+1 .. better+equal share their mean.
      ranks.push_back(better + (equal + 1.0) / 2.0);
    }
    table.ranks.push_back(std::move(ranks));
  }
  for (std::size_t m = 0; m < table.methods.size(); ++m) {
    double sum = 0.0;
    for (const auto& row : table.ranks) sum += row[m];
    table.average_rank[table.methods[m]] = sum / static_cast<double>(table.ranks.size());
  }
  return table;
}

json to_json(const RankTable& table) {
  json cells = json::array();
  for (std::size_t c = 0; c < table.cells.size(); ++c) {
    json row{{"cell", json::parse(table.cells[c])}, {"ranks", json::object()}};
    for (std::size_t m = 0; m < table.methods.size(); ++m) row["ranks"][table.methods[m]] = table.ranks[c][m];
    cells.push_back(std::move(row));
  }
  return {{"average_rank", table.average_rank}, {"cells", std::move(cells)}};
}

}  // namespace autosmote::engine
