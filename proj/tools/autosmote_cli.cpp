#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "autosmote/engine.hpp"

using namespace autosmote;
using nlohmann::json;

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kConfigError = 2;
constexpr int kDataError = 3;

int cmd_run(const std::string& config_path) {
  const auto config = engine::load_config(config_path);
  const auto report = engine::run(config);
  std::cout << std::fixed << std::setprecision(4);
  for (const auto& s : report.seeds) {
    std::cout << "seed " << s.seed << "  validation " << s.validation << "  test " << s.test << "  ("
              << std::setprecision(1) << s.seconds << "s)" << std::setprecision(4) << '\n';
  }
  std::cout << report.method << " mean test " << metrics::to_string(config.metric) << ' ' << report.mean_test << '\n';
  if (!config.output_dir.empty()) std::cout << "report written to " << (config.output_dir / "report.json").string() << '\n';
  return 0;
}

int cmd_compare(const std::vector<std::string>& paths, const std::string& out) {
  std::vector<json> reports;
  for (const auto& p : paths) {
    std::ifstream in(p);
    if (!in) throw DataError("cannot open report '" + p + "'");
    try {
      reports.push_back(json::parse(in));
    } catch (const json::exception& e) {
      throw DataError("report '" + p + "': " + e.what());
    }
  }
  const auto table = engine::compare(reports);
  std::cout << std::fixed << std::setprecision(2);
  for (const auto& [method, rank] : table.average_rank) std::cout << std::setw(16) << std::left << method << rank << '\n';
  if (!out.empty()) std::ofstream(out) << engine::to_json(table).dump(2) << '\n';
  return 0;
}

int cmd_make_toy(const std::string& out, std::uint64_t seed) {
  engine::ToyConfig toy;
  toy.seed = seed;
  const auto ds = engine::make_toy(toy);
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write '" + out + "'");
  f << "x0,x1,label\n" << std::setprecision(17);
  for (Index i = 0; i < ds.rows(); ++i) f << ds.features(i, 0) << ',' << ds.features(i, 1) << ',' << ds.labels(i) << '\n';
  std::cout << "wrote " << ds.rows() << " rows (" << ds.n_minority() << " minority) to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned over-sampling for imbalanced binary classification"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run an experiment from a JSON config");
  run->add_option("--config", config_path, "Config file")->required();

  std::vector<std::string> reports;
  std::string compare_out;
  auto* compare = app.add_subcommand("compare", "Average ranks across report.json files");
  compare->add_option("reports", reports, "Report files")->required();
  compare->add_option("--out", compare_out, "Write the rank table as JSON");

  std::string toy_out;
  std::uint64_t toy_seed = 0;
  auto* toy = app.add_subcommand("make-toy", "Write the 2-D toy dataset as CSV");
  toy->add_option("--out", toy_out, "Output CSV")->required();
  toy->add_option("--seed", toy_seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kConfigError;
  }

  try {
    if (run->parsed()) return cmd_run(config_path);
    if (compare->parsed()) return cmd_compare(reports, compare_out);
    if (toy->parsed()) return cmd_make_toy(toy_out, toy_seed);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kRuntimeFailure;
}
