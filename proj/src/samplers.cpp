#include "autosmote/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>

namespace autosmote::sampling {

NeighborIndex knn_points(const Matrix& points, int K) {
  const Index n = points.rows();
  if (n < 2) throw DataError("knn_minority: need at least 2 minority instances");
  if (K < 1) throw std::invalid_argument("knn_minority: K must be >= 1");
  const Index width = std::min<Index>(K, n - 1);
  NeighborIndex index{K, points, IndexMatrix(n, width)};
  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(n - 1));
  Vector d(n);
  for (Index i = 0; i < n; ++i) {
    d = (points.rowwise() - points.row(i)).rowwise().squaredNorm();
    order.clear();
    for (Index j = 0; j < n; ++j) {
      if (j != i) order.push_back(j);
    }
    std::partial_sort(order.begin(), order.begin() + width, order.end(),
                      [&](Index a, Index b) { return d(a) < d(b) || (d(a) == d(b) && a < b); });
    for (Index j = 0; j < width; ++j) index.table(i, j) = static_cast<int>(order[static_cast<std::size_t>(j)]);
  }
  return index;
}

NeighborIndex knn_minority(const data::Dataset& train, int K) { return knn_points(train.minority_features(), K); }

data::Dataset as_dataset(const SyntheticSet& set, Index dims) {
  Matrix x = set.size() > 0 ? set.samples : Matrix(0, dims);
  data::Dataset ds(std::move(x), Labels::Constant(set.size(), kMinority));
  std::fill(ds.synthetic.begin(), ds.synthetic.end(), true);
  std::fill(ds.origin.begin(), ds.origin.end(), -1L);
  return ds;
}

data::Dataset augment(const data::Dataset& train, const SyntheticSet& set) {
  if (set.size() == 0) return train;
  return data::concat(train, as_dataset(set, train.dims()));
}

SyntheticSet smote(const NeighborIndex& index, Index n_new, std::uint64_t seed) {
  if (n_new < 0) throw std::invalid_argument("smote: n_new must be >= 0");
  SyntheticSet out;
  out.samples.resize(n_new, index.points.cols());
  out.provenance.reserve(static_cast<std::size_t>(n_new));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> pick_source(0, index.size() - 1);
  std::uniform_int_distribution<int> pick_slot(0, index.width() - 1);
  std::uniform_real_distribution<double> pick_lambda(0.0, 1.0);
  for (Index s = 0; s < n_new; ++s) {
    const Index src = pick_source(rng);
    const Index nb = index.table(src, pick_slot(rng));
    const double lambda = pick_lambda(rng);
    out.samples.row(s) = interpolate(index.points.row(src), index.points.row(nb), lambda);
    out.provenance.push_back({src, nb, lambda});
  }
  return out;
}

SyntheticSet smote(const data::Dataset& train, Index n_new, int k, std::uint64_t seed) {
  return smote(knn_minority(train, k), n_new, seed);
}

ContainmentReport audit_containment(const SyntheticSet& set, const NeighborIndex& index,
                                    std::span<const double> allowed_lambdas, double tol) {
  ContainmentReport report;
  if (static_cast<Index>(set.provenance.size()) != set.size()) {
    report.violations = std::max<Index>(1, set.size());
    return report;
  }
  for (Index r = 0; r < set.size(); ++r) {
    ++report.checked;
    const auto& p = set.provenance[static_cast<std::size_t>(r)];
    bool valid = p.source >= 0 && p.source < index.size() && p.neighbor >= 0 && p.neighbor < index.size();
    if (valid) {
      const auto row = index.table.row(p.source);
      valid = std::find(row.begin(), row.end(), static_cast<int>(p.neighbor)) != row.end();
    }
    if (valid) {
      if (allowed_lambdas.empty()) {
        valid = p.lambda >= 0.0 && p.lambda <= 1.0;
      } else {
        valid = std::find(allowed_lambdas.begin(), allowed_lambdas.end(), p.lambda) != allowed_lambdas.end();
      }
    }
    if (valid) {
      const RowVector rebuilt = interpolate(index.points.row(p.source), index.points.row(p.neighbor), p.lambda);
      const double err = (rebuilt - set.samples.row(r)).cwiseAbs().maxCoeff();
      report.max_error = std::max(report.max_error, err);
      valid = err <= tol;
    }
    if (!valid) ++report.violations;
  }
  return report;
}

namespace {

void check_ratio(double target_ratio) {
  if (!(target_ratio > 0.0 && target_ratio <= 1.0)) {
    throw std::invalid_argument("resample: target ratio must be in (0, 1]");
  }
}

double current_ratio(const data::Dataset& train) {
  return static_cast<double>(train.n_minority()) / static_cast<double>(train.n_majority());
}

}  // namespace

data::Dataset random_oversample(const data::Dataset& train, double target_ratio, std::uint64_t seed) {
  check_ratio(target_ratio);
  if (target_ratio < current_ratio(train) * (1.0 - 1e-12)) {
    throw std::invalid_argument("random_oversample: target ratio is below the current ratio");
  }
  const auto minority = train.minority_rows();
  const auto target = std::max<Index>(static_cast<Index>(minority.size()),
                                      std::llround(target_ratio * static_cast<double>(train.n_majority())));
  const Index extra = target - static_cast<Index>(minority.size());
  if (extra == 0) return train;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, minority.size() - 1);
  std::vector<Index> dup(static_cast<std::size_t>(extra));
  for (auto& d : dup) d = minority[pick(rng)];
  data::Dataset extra_rows = train.subset(dup);
  std::fill(extra_rows.synthetic.begin(), extra_rows.synthetic.end(), true);
  return data::concat(train, extra_rows);
}

data::Dataset random_undersample(const data::Dataset& train, double target_ratio, std::uint64_t seed) {
  check_ratio(target_ratio);
  if (target_ratio < current_ratio(train) * (1.0 - 1e-12)) {
    throw std::invalid_argument("random_undersample: ratio unreachable without adding majority rows");
  }
  auto majority = train.majority_rows();
  const auto n_min = static_cast<double>(train.n_minority());
  const auto keep = std::clamp<Index>(std::llround(n_min / target_ratio), 1, static_cast<Index>(majority.size()));
  if (keep == static_cast<Index>(majority.size())) return train;
  std::mt19937_64 rng(seed);
  std::vector<Index> kept;
  std::sample(majority.begin(), majority.end(), std::back_inserter(kept), keep, rng);
  auto minority = train.minority_rows();
  kept.insert(kept.end(), minority.begin(), minority.end());
  std::sort(kept.begin(), kept.end());
  return train.subset(kept);
}

SamplerKind parse_sampler(const std::string& name) {
  if (name == "none") return SamplerKind::none;
  if (name == "smote") return SamplerKind::smote;
  if (name == "random_over") return SamplerKind::random_over;
  if (name == "random_under") return SamplerKind::random_under;
  throw ConfigError("unknown sampler '" + name + "'");
}

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::none: return "none";
    case SamplerKind::smote: return "smote";
    case SamplerKind::random_over: return "random_over";
    case SamplerKind::random_under: return "random_under";
  }
  return "unknown";
}

Resampled resample(SamplerKind kind, const data::Dataset& train, double ratio, int smote_k, std::uint64_t seed) {
  check_ratio(ratio);
  const bool reachable = ratio >= current_ratio(train) * (1.0 - 1e-12);
  if (kind == SamplerKind::none || !reachable) return {train, std::nullopt};
  switch (kind) {
    case SamplerKind::smote: {
      const auto target = std::llround(ratio * static_cast<double>(train.n_majority()));
      const Index n_new = std::max<Index>(0, target - train.n_minority());
      auto set = smote(train, n_new, smote_k, seed);
      auto augmented = augment(train, set);
      return {std::move(augmented), std::move(set)};
    }
    case SamplerKind::random_over:
      return {random_oversample(train, ratio, seed), std::nullopt};
    case SamplerKind::random_under:
      return {random_undersample(train, ratio, seed), std::nullopt};
    case SamplerKind::none:
      break;
  }
  return {train, std::nullopt};
}

std::vector<double> default_ratio_grid() { return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}; }

GridSearchResult grid_search_ratio(SamplerKind kind, const data::SplitDataset& split, const clf::ClassifierSpec& spec,
                                   metrics::Metric metric, std::span<const double> grid, std::uint64_t seed,
                                   int smote_k) {
  if (grid.empty()) throw std::invalid_argument("grid_search_ratio: empty grid");
  std::vector<double> ratios(grid.begin(), grid.end());
  std::sort(ratios.begin(), ratios.end());
  GridSearchResult result;
  result.best_score = -std::numeric_limits<double>::infinity();
  for (double ratio : ratios) {
    auto resampled = resample(kind, split.train, ratio, smote_k, seed);
    const auto model = clf::fit(spec, resampled.train);
    const double score = clf::evaluate(model, split.validation, metric);
    ++result.fits;
    result.scores.emplace_back(ratio, score);
    // Ascending ratios with strict improvement: ties keep the smaller ratio.
    if (score > result.best_score) {
      result.best_score = score;
      result.best_ratio = ratio;
      result.resampled = std::move(resampled);
    }
  }
  return result;
}

void write_synthetic_csv(const SyntheticSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << std::setprecision(17);
  const Index dims = set.samples.cols();
  for (Index j = 0; j < dims; ++j) out << 'x' << j << ',';
  out << "source_idx,neighbor_idx,lambda\n";
  for (Index r = 0; r < set.size(); ++r) {
    for (Index j = 0; j < dims; ++j) out << set.samples(r, j) << ',';
    const auto& p = set.provenance[static_cast<std::size_t>(r)];
    out << p.source << ',' << p.neighbor << ',' << p.lambda << '\n';
  }
}

}  // namespace autosmote::sampling
