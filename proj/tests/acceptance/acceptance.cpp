// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "autosmote/engine.hpp"
#include "../gradcheck.hpp"
#include "../scripted.hpp"

using namespace autosmote;

namespace {

// Pinned tolerances and budgets.
constexpr int kSeeds = 5;
constexpr int kToyIterations = 300;
constexpr double kToyTarget = 0.95;
constexpr int kToySeedsNeeded = 3;
constexpr double kWallClockLimit = 600.0;
constexpr int kRandomSearchIterations = 200;
constexpr int kRandomSearchSeedsNeeded = 4;
constexpr double kPublicIR = 20.0;
constexpr int kPublicIterations = 300;
constexpr double kBaselineSlack = 0.01;
constexpr double kVtraceTol = 1e-12;
constexpr double kGradTol = 1e-4;
constexpr double kKinkMargin = 1e-3;
constexpr double kContainmentTol = 1e-12;
constexpr double kMccHand = 0.7035;
constexpr double kMccHandTol = 1e-4;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::vector<std::pair<std::string, Outcome>> results;

void record(int id, const std::string& name, Outcome o) {
  std::printf("%s  [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  results.emplace_back(name, std::move(o));
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<std::uint64_t> seed_list() {
  std::vector<std::uint64_t> s(kSeeds);
  for (int i = 0; i < kSeeds; ++i) s[static_cast<std::size_t>(i)] = static_cast<std::uint64_t>(i);
  return s;
}

const std::string kPublicCsv = AUTOSMOTE_DATA_DIR "/breast_cancer.csv";

engine::ExperimentConfig toy_config(engine::Method method, int iterations) {
  engine::ExperimentConfig c;
  c.dataset = "toy";
  c.method = method;
  c.classifier = clf::ClassifierSpec(clf::Kind::decision_tree);
  c.metric = metrics::Metric::macro_f1;
  c.seeds = seed_list();
  c.actors = 1;
  c.search.iterations = iterations;
  c.search.actors = 1;
  c.ratio_grid = sampling::default_ratio_grid();
  return c;
}

engine::ExperimentConfig public_config(engine::Method method) {
  auto c = toy_config(method, kPublicIterations);
  c.dataset = kPublicCsv;
  c.label_column = "diagnosis";
  c.target_ir = kPublicIR;
  return c;
}

// Every report produced for criteria 1-3, for the audit and containment checks.
struct Run {
  std::string label;
  engine::ExperimentConfig config;
  engine::RunReport report;
};
std::deque<Run> runs;  // stable references

const engine::RunReport& execute(const std::string& label, const engine::ExperimentConfig& config) {
  runs.push_back({label, config, engine::run(config)});
  return runs.back().report;
}

// ---------------------------------------------------------------- 1
void toy_case_study() {
  const auto start = std::chrono::steady_clock::now();
  const auto& r = execute("toy/autosmote", toy_config(engine::Method::autosmote, kToyIterations));
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  int hits = 0;
  std::string scores;
  for (const auto& s : r.seeds) {
    hits += s.test >= kToyTarget;
    scores += fmt("%.3f ", s.test);
  }
  record(1, "toy case study",
         {hits >= kToySeedsNeeded && seconds < kWallClockLimit,
          fmt("test macro-F1 >= %.2f in %d/%d seeds (need %d) [%s], %.1f s (limit %.0f s, %u core(s))", kToyTarget,
              hits, kSeeds, kToySeedsNeeded, scores.c_str(), seconds, kWallClockLimit,
              std::thread::hardware_concurrency())});
}

// ---------------------------------------------------------------- 2
void beats_random_search() {
  const auto& learned = execute("toy/autosmote I=200", toy_config(engine::Method::autosmote, kRandomSearchIterations));
  const auto& random =
      execute("toy/random_search I=200", toy_config(engine::Method::random_search, kRandomSearchIterations));
  int wins = 0;
  std::string pairs;
  for (std::size_t i = 0; i < learned.seeds.size(); ++i) {
    wins += learned.seeds[i].validation >= random.seeds[i].validation;
    pairs += fmt("%.3f/%.3f ", learned.seeds[i].validation, random.seeds[i].validation);
  }
  record(2, "beats random search",
         {wins >= kRandomSearchSeedsNeeded,
          fmt("best validation learned >= random in %d/%d seeds (need %d) [%s]", wins, kSeeds,
              kRandomSearchSeedsNeeded, pairs.c_str())});
}

// ---------------------------------------------------------------- 3
std::vector<double> test_scores(const engine::RunReport& r) {
  std::vector<double> v;
  for (const auto& s : r.seeds) v.push_back(s.test);
  return v;
}

void beats_baselines() {
  const engine::Method baselines[] = {engine::Method::smote, engine::Method::random_over, engine::Method::random_under,
                                      engine::Method::none};
  bool pass = true;
  std::string detail;
  for (const std::string cell : {"toy", "breast_cancer IR20"}) {
    const bool toy = cell == "toy";
    // The toy AutoSMOTE run is the one from criterion 1 (same cell and budget).
    const engine::RunReport* learned = nullptr;
    if (toy) {
      learned = &runs.front().report;
    } else {
      learned = &execute(cell + "/autosmote", public_config(engine::Method::autosmote));
    }
    const double ours = median(test_scores(*learned));
    double best = -1.0;
    std::string best_name;
    for (auto m : baselines) {
      const auto config = toy ? toy_config(m, 0) : public_config(m);
      const double score = median(test_scores(execute(cell + "/" + engine::to_string(m), config)));
      if (score > best) {
        best = score;
        best_name = engine::to_string(m);
      }
    }
    const bool ok = ours >= best - kBaselineSlack;
    pass = pass && ok;
    detail += fmt("%s: median %.4f vs best baseline %s %.4f%s; ", cell.c_str(), ours, best_name.c_str(), best,
                  ok ? "" : " (short)");
  }
  record(3, "beats tuned baselines", {pass, detail + fmt("slack %.2f", kBaselineSlack)});
}

// ---------------------------------------------------------------- 4
Vector vtrace_recursive(const Vector& r, const Vector& V, const Vector& pi, const Vector& mu,
                        const hrl::VTraceParams& p) {
  Vector v(r.size());
  double v_next = 0.0, V_next = 0.0;
  for (Index s = r.size() - 1; s >= 0; --s) {
    const double ratio = pi(s) / mu(s);
    const double rho = std::min(p.rho_bar, ratio), c = std::min(p.c_bar, ratio);
    v(s) = V(s) + rho * (r(s) + p.gamma * V_next - V(s)) + p.gamma * c * (v_next - V_next);
    v_next = v(s);
    V_next = V(s);
  }
  return v;
}

void vtrace_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int e = 0; e < 1000; ++e) {
    const Index n = 1 + static_cast<Index>(rng() % 10);
    Vector r(n), V(n), pi(n), mu(n);
    for (Index i = 0; i < n; ++i) {
      r(i) = 2 * u(rng) - 1;
      V(i) = 2 * u(rng) - 1;
      pi(i) = 0.01 + 0.99 * u(rng);
      mu(i) = 0.01 + 0.99 * u(rng);
    }
    hrl::VTraceParams p{0.5 + 0.5 * u(rng), 0.5 + u(rng), 0.5 + u(rng)};
    worst = std::max(worst, (hrl::vtrace_targets(r, V, pi, mu, p) - vtrace_recursive(r, V, pi, mu, p))
                                .cwiseAbs()
                                .maxCoeff());
  }
  bool exact = true;
  for (int e = 0; e < 100; ++e) {
    Vector r(1), V(1), pi(1);
    r << 2 * u(rng) - 1;
    V << 10 * u(rng) - 5;
    pi << 0.01 + 0.99 * u(rng);
    exact = exact && hrl::vtrace_targets(r, V, pi, pi, {})(0) == r(0);
  }
  record(4, "v-trace oracle",
         {worst <= kVtraceTol && exact,
          fmt("max |direct - recursive| = %.2e over 1000 episodes (tol %.0e); on-policy single step v == r: %s", worst,
              kVtraceTol, exact ? "exact" : "NOT exact")});
}

// ---------------------------------------------------------------- 5
void gradient_check() {
  std::mt19937_64 rng(77);
  double worst_mlp = 0.0;
  for (int i = 0; i < 20;) {
    const auto net = nn::Mlp::create({3, 4, 4, 2}, false, rng());
    const Matrix x = Matrix::Random(3, 5), y = Matrix::Random(2, 5);
    if (gradcheck::relu_margin(net, x) < kKinkMargin) continue;
    nn::MlpTape tape;
    const Matrix out = nn::forward(net, x, &tape);
    auto grads = nn::zeros_like(net);
    nn::backward(net, tape, out - y, grads);
    worst_mlp = std::max(worst_mlp, gradcheck::max_relative_error(net, grads, [&](const nn::Mlp& n) {
                           return 0.5 * (nn::forward(n, x) - y).squaredNorm();
                         }));
    ++i;
  }

  double worst_rl = 0.0;
  hrl::LossParams params;
  for (int i = 0; i < 20;) {
    const auto index = sampling::knn_points(Matrix(Matrix::Random(5, 2)), 3);
    hrl::NetworkShape shape{2 + hrl::kUsageBins, 2, 3, {6, 5}, 4};
    const auto bundle = hrl::PolicyBundle::create(shape, rng());
    std::vector<hrl::Trajectory> cross, inst, low;
    for (int e = 0; e < 2; ++e) {
      hrl::UniformDecider d(2, 3, rng());
      auto ep = e == 0 ? hrl::generate(bundle, index, 2, 3, rng()) : hrl::generate(d, index, 2, 3);
      hrl::assign_reward(ep, std::uniform_real_distribution<double>(0, 1)(rng));
      cross.push_back(ep.cross);
      inst.push_back(ep.instance);
      for (const auto& t : ep.low) {
        if (t.size() > 0) low.push_back(t);
      }
    }
    if (low.empty()) continue;
    auto states = [](const std::vector<hrl::Trajectory>& b) {
      std::vector<Vector> cols;
      for (const auto& t : b) {
        for (const auto& s : t.steps) cols.push_back(s.state);
      }
      Matrix m(cols.front().size(), static_cast<Index>(cols.size()));
      for (std::size_t c = 0; c < cols.size(); ++c) m.col(static_cast<Index>(c)) = cols[c];
      return m;
    };
    double scorer_margin = std::numeric_limits<double>::infinity();
    for (const auto& t : low) {
      for (const auto& s : t.steps) {
        nn::ScorerTape tape;
        const std::vector<int> bins(s.neighbor_bins.data(), s.neighbor_bins.data() + s.neighbor_bins.size());
        nn::score(bundle.low.scorer, nn::forward(bundle.low.trunk, s.state), hrl::low_action_matrix(bins), &tape);
        scorer_margin = std::min(scorer_margin, tape.hidden_pre.cwiseAbs().minCoeff());
      }
    }
    if (gradcheck::relu_margin(bundle.cross.trunk, states(cross)) < kKinkMargin ||
        gradcheck::relu_margin(bundle.instance.trunk, states(inst)) < kKinkMargin ||
        gradcheck::relu_margin(bundle.low.trunk, states(low)) < kKinkMargin || scorer_margin < kKinkMargin) {
      continue;
    }
    auto level = [&](const auto& net, const std::vector<hrl::Trajectory>& batch) {
      using Net = std::decay_t<decltype(net)>;
      const std::span<const hrl::Trajectory> span(batch);
      auto grads = nn::zeros_like(net);
      hrl::impala_loss(net, span, params, grads);
      const auto frozen = hrl::compute_targets(net, span, params);
      return gradcheck::max_relative_error(
          net, grads, [&](const Net& n) { return hrl::surrogate_loss(n, span, frozen, params, nullptr).total; });
    };
    worst_rl = std::max({worst_rl, level(bundle.cross, cross), level(bundle.instance, inst), level(bundle.low, low)});
    ++i;
  }
  record(5, "gradient correctness",
         {worst_mlp < kGradTol && worst_rl < kGradTol,
          fmt("max relative error: regression %.2e, actor-critic loss %.2e over 20 instances each (h=%.0e, tol %.0e)",
              worst_mlp, worst_rl, gradcheck::kStep, kGradTol)});
}

// ---------------------------------------------------------------- 6
data::SplitDataset split_for(const engine::ExperimentConfig& c, std::uint64_t seed) {
  if (c.dataset == "toy") return data::prepare(engine::make_toy(c.toy), c.target_ir, seed);
  return data::prepare(data::load_csv(c.dataset, c.label_column), c.target_ir, seed);
}

void containment() {
  Index checked = 0, violations = 0;
  double max_error = 0.0;
  int sets = 0;
  auto audit = [&](const sampling::SyntheticSet& set, const sampling::NeighborIndex& index,
                   std::span<const double> lambdas) {
    const auto rep = sampling::audit_containment(set, index, lambdas, kContainmentTol);
    checked += rep.checked;
    violations += rep.violations;
    max_error = std::max(max_error, rep.max_error);
    ++sets;
  };
  for (const auto& run : runs) {
    const bool search = run.config.method == engine::Method::autosmote || run.config.method == engine::Method::random_search;
    for (const auto& s : run.report.seeds) {
      if (!s.synthetic) continue;
      const auto split = split_for(run.config, s.seed);
      if (search) {
        audit(*s.synthetic, sampling::knn_minority(split.train, run.config.search.neighbors), hrl::kLambdas);
      } else {
        audit(*s.synthetic, sampling::knn_minority(split.train, run.config.smote_k), {});
      }
    }
  }
  // Every episode of a fresh search, not only the kept one.
  const auto split = data::prepare(engine::make_toy({}), std::nullopt, 0);
  const auto index = sampling::knn_minority(split.train, 30);
  const auto bundle = hrl::PolicyBundle::create({split.train.dims() + hrl::kUsageBins, 6, 10, {128, 128}, 128}, 1);
  for (std::uint64_t e = 0; e < 20; ++e) audit(hrl::generate(bundle, index, 6, 10, e).synthetic, index, hrl::kLambdas);
  record(6, "SMOTE-space containment",
         {violations == 0 && checked > 0,
          fmt("%ld samples in %d sets (searches, SMOTE baselines, raw episodes): %ld violations, max error %.1e "
              "(tol %.0e)",
              static_cast<long>(checked), sets, static_cast<long>(violations), max_error, kContainmentTol)});
}

// ---------------------------------------------------------------- 7
void metric_oracles() {
  std::mt19937_64 rng(99);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 80);
    std::bernoulli_distribution bt(std::uniform_real_distribution<double>(0, 1)(rng));
    std::bernoulli_distribution bp(std::uniform_real_distribution<double>(0, 1)(rng));
    Labels t(n), p(n);
    for (int i = 0; i < n; ++i) {
      t(i) = bt(rng);
      p(i) = bp(rng);
    }
    // Brute force: count every (truth, prediction) pair, then apply the definitions.
    long cell[2][2] = {{0, 0}, {0, 0}};
    for (int i = 0; i < n; ++i) ++cell[t(i)][p(i)];
    double f1_sum = 0.0;
    for (int c : {0, 1}) {
      const long tp = cell[c][c], fp = cell[1 - c][c], fn = cell[c][1 - c];
      f1_sum += 2 * tp + fp + fn == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
    }
    const double f1 = f1_sum / 2.0;
    const double tp = static_cast<double>(cell[1][1]), tn = static_cast<double>(cell[0][0]);
    const double fp = static_cast<double>(cell[0][1]), fn = static_cast<double>(cell[1][0]);
    const double prod = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    const double m = prod == 0 ? 0.0 : (tp * tn - fp * fn) / std::sqrt(prod);
    const auto counts = metrics::confusion(t, p);
    mismatches += metrics::macro_f1(counts) != f1;
    mismatches += metrics::mcc(counts) != m;
  }
  const double hand_f1 = metrics::macro_f1({5, 5, 5, 5});
  const double hand_mcc = metrics::mcc({90, 10, 80, 20});
  const bool hands = hand_f1 == 0.5 && std::abs(hand_mcc - kMccHand) <= kMccHandTol;
  record(7, "metric oracles",
         {mismatches == 0 && hands,
          fmt("%d inexact results over 1000 random labelings x 2 metrics; macro-F1(5,5,5,5) = %.6f, "
              "MCC(tp 90, tn 80, fp 10, fn 20) = %.6f",
              mismatches, hand_f1, hand_mcc)});
}

// ---------------------------------------------------------------- 8
void episode_accounting() {
  std::mt19937_64 rng(8);
  int bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 2 + static_cast<Index>(rng() % 12);
    const auto index = sampling::knn_points(Matrix(Matrix::Random(n, 3)), 1 + static_cast<int>(rng() % 6));
    const int g1_max = 1 + static_cast<int>(rng() % 4), g2_max = 1 + static_cast<int>(rng() % 10);
    hrl::Episode ep;
    if (trial % 2 == 0) {
      hrl::UniformDecider d(g1_max, g2_max, rng());
      ep = hrl::generate(d, index, g1_max, g2_max);
    } else {
      const auto bundle = hrl::PolicyBundle::create({3 + hrl::kUsageBins, g1_max, g2_max, {8, 8}, 8}, rng());
      ep = hrl::generate(bundle, index, g1_max, g2_max, rng());
    }
    Index total = 0;
    for (Index i = 0; i < n; ++i) {
      const int goal = ep.g1 * ep.g2[static_cast<std::size_t>(i)];
      bad += ep.low[static_cast<std::size_t>(i)].size() != goal;
      total += goal;
    }
    bad += ep.synthetic.size() != total;
  }
  Matrix pts(4, 2);
  pts << 0, 0, 1, 0, 0, 1, 1, 1;
  const auto index = sampling::knn_points(pts, 3);
  ScriptedDecider d(1, {1, 4, 0, 3});
  const auto ep = hrl::generate(d, index, 1, 10);
  const bool walk = ep.synthetic.size() == 8 && ep.low[0].size() == 1 && ep.low[1].size() == 4 &&
                    ep.low[2].size() == 0 && ep.low[3].size() == 3;
  record(8, "episode accounting",
         {bad == 0 && walk, fmt("%d mismatches over 100 random episodes; goals 1,4,0,3 -> %ld samples, low lengths "
                                "%ld,%ld,%ld,%ld",
                                bad, static_cast<long>(ep.synthetic.size()), static_cast<long>(ep.low[0].size()),
                                static_cast<long>(ep.low[1].size()), static_cast<long>(ep.low[2].size()),
                                static_cast<long>(ep.low[3].size()))});
}

// ---------------------------------------------------------------- 9
void determinism() {
  auto config = toy_config(engine::Method::autosmote, 100);
  config.seeds = {0, 1};
  const auto a = engine::score_fields(engine::run(config)).dump();
  const auto b = engine::score_fields(engine::run(config)).dump();
  auto rs = toy_config(engine::Method::random_search, 100);
  rs.seeds = {0, 1};
  const auto c = engine::score_fields(engine::run(rs)).dump();
  const auto d = engine::score_fields(engine::run(rs)).dump();
  record(9, "determinism",
         {a == b && c == d, fmt("score fields identical across two executions: autosmote %s (%zu bytes), "
                                "random_search %s (%zu bytes)",
                                a == b ? "yes" : "no", a.size(), c == d ? "yes" : "no", c.size())});
}

// ---------------------------------------------------------------- 10
void protocol_hygiene() {
  int audited = 0, wrong = 0;
  std::string offenders;
  for (const auto& run : runs) {
    for (const auto& s : run.report.seeds) {
      ++audited;
      if (s.test_reads != 1) {
        ++wrong;
        offenders += fmt(" %s seed %lu: %zu reads;", run.label.c_str(), static_cast<unsigned long>(s.seed),
                         s.test_reads);
      }
    }
  }
  record(10, "protocol hygiene",
         {wrong == 0 && audited > 0,
          fmt("%d (method, seed) runs audited, %d with a test-read count other than 1%s", audited, wrong,
              offenders.c_str())});
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> criteria{toy_case_study, beats_random_search, beats_baselines,
                                                    vtrace_oracle,  gradient_check,      containment,
                                                    metric_oracles, episode_accounting,  determinism,
                                                    protocol_hygiene};
  for (const auto& c : criteria) {
    try {
      c();
    } catch (const std::exception& e) {
      record(static_cast<int>(results.size()) + 1, "criterion", {false, std::string("exception: ") + e.what()});
    }
  }
  const auto failed = std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.second.pass; });
  std::printf("%zu/%zu criteria passed\n", results.size() - static_cast<std::size_t>(failed), results.size());
  return failed == 0 ? 0 : 1;
}
