#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "autosmote/classifiers.hpp"
#include "autosmote/core.hpp"
#include "autosmote/data.hpp"
#include "autosmote/metrics.hpp"

namespace autosmote::sampling {

// Exact K nearest minority neighbors of every minority instance. Indices are
// positions in `points` (the minority rows of the training set, in order).
struct NeighborIndex {
  int k = 0;
  Matrix points;
  IndexMatrix table;  // N_min x min(K, N_min - 1), ascending distance

  Index size() const { return points.rows(); }
  int width() const { return static_cast<int>(table.cols()); }
};

NeighborIndex knn_minority(const data::Dataset& train, int K);
NeighborIndex knn_points(const Matrix& points, int K);

template <typename DerivedA, typename DerivedB>
auto interpolate(const Eigen::MatrixBase<DerivedA>& source, const Eigen::MatrixBase<DerivedB>& neighbor,
                 double lambda) {
  if (source.rows() != neighbor.rows() || source.cols() != neighbor.cols()) {
    throw std::invalid_argument("interpolate: dimension mismatch");
  }
  using Plain = typename DerivedA::PlainObject;
  return Plain(source + lambda * (neighbor - source));
}

struct Provenance {
  Index source = 0;    // minority index
  Index neighbor = 0;  // minority index
  double lambda = 0.0;
};

struct SyntheticSet {
  Matrix samples;
  std::vector<Provenance> provenance;

  Index size() const { return samples.rows(); }
};

// Minority-labelled rows flagged as synthetic.
data::Dataset as_dataset(const SyntheticSet& set, Index dims);

// Training set with the synthetic rows appended.
data::Dataset augment(const data::Dataset& train, const SyntheticSet& set);

SyntheticSet smote(const data::Dataset& train, Index n_new, int k, std::uint64_t seed);
SyntheticSet smote(const NeighborIndex& index, Index n_new, std::uint64_t seed);

struct ContainmentReport {
  Index checked = 0;
  Index violations = 0;
  double max_error = 0.0;

  bool ok() const { return violations == 0; }
};

// Checks that every row reconstructs from its provenance within `tol`, the
// neighbor is one of the source's top-K minority neighbors and lambda lies in
// `allowed_lambdas` (any value in [0, 1] when empty).
ContainmentReport audit_containment(const SyntheticSet& set, const NeighborIndex& index,
                                    std::span<const double> allowed_lambdas = {}, double tol = 1e-12);

// target_ratio = n_minority_after / n_majority_after.
data::Dataset random_oversample(const data::Dataset& train, double target_ratio, std::uint64_t seed);
data::Dataset random_undersample(const data::Dataset& train, double target_ratio, std::uint64_t seed);

enum class SamplerKind { none, smote, random_over, random_under };

SamplerKind parse_sampler(const std::string& name);
std::string to_string(SamplerKind kind);

struct Resampled {
  data::Dataset train;
  std::optional<SyntheticSet> synthetic;  // set for SMOTE
};

// Applies a baseline sampler at the given ratio. Ratios the sampler cannot
// reach from the current class balance leave the training set unchanged.
Resampled resample(SamplerKind kind, const data::Dataset& train, double ratio, int smote_k, std::uint64_t seed);

std::vector<double> default_ratio_grid();

struct GridSearchResult {
  double best_ratio = 0.0;
  double best_score = 0.0;
  Resampled resampled;
  std::vector<std::pair<double, double>> scores;  // (ratio, validation score)
  int fits = 0;
};

GridSearchResult grid_search_ratio(SamplerKind kind, const data::SplitDataset& split, const clf::ClassifierSpec& spec,
                                   metrics::Metric metric, std::span<const double> grid, std::uint64_t seed,
                                   int smote_k = 5);

// CSV with the sample features followed by source_idx, neighbor_idx, lambda.
void write_synthetic_csv(const SyntheticSet& set, const std::filesystem::path& path);

}  // namespace autosmote::sampling
