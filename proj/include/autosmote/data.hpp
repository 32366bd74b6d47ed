#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "autosmote/core.hpp"

namespace autosmote::data {

enum class ColumnKind { numeric, categorical };

// Parsed CSV with the label column split off and remapped so that the rarer
// label value is the minority class (1). Missing cells are std::nullopt.
struct RawTable {
  std::vector<std::string> column_names;
  std::vector<std::vector<std::optional<std::string>>> columns;
  std::vector<ColumnKind> kinds;
  Labels labels;
  std::string majority_label;
  std::string minority_label;

  std::size_t rows() const { return static_cast<std::size_t>(labels.size()); }
};

// Column-type hints by column name. Columns without a hint are numeric when
// every observed cell parses as a number, categorical otherwise.
using Schema = std::map<std::string, ColumnKind>;

RawTable load_csv(const std::filesystem::path& path, const std::string& label_column,
                  const Schema& schema = {});
RawTable parse_csv(std::string_view text, const std::string& label_column,
                   const Schema& schema = {});

struct Dataset {
  Matrix features;
  Labels labels;
  // Marks rows that were duplicated or synthesized by a resampler.
  std::vector<bool> synthetic;
  // Row index in the source table, or -1 for generated rows.
  std::vector<long> origin;

  Dataset() = default;
  Dataset(Matrix x, Labels y);

  Index rows() const { return features.rows(); }
  Index dims() const { return features.cols(); }
  Index n_majority() const { return (labels.array() == kMajority).count(); }
  Index n_minority() const { return (labels.array() == kMinority).count(); }
  double imbalance_ratio() const;

  Dataset subset(std::span<const Index> rows) const;
  Matrix minority_features() const;
  std::vector<Index> minority_rows() const;
  std::vector<Index> majority_rows() const;
};

// Rows of `a` followed by rows of `b`.
Dataset concat(const Dataset& a, const Dataset& b);

struct PreprocessSpec {
  std::vector<std::size_t> numeric_columns;
  std::vector<std::size_t> categorical_columns;
  std::vector<double> means;
  std::vector<double> stddevs;
  std::vector<std::vector<std::string>> category_vocabularies;

  Index output_dims() const;
};

// Fits scaling and encoding parameters on the given rows (all rows if empty).
PreprocessSpec fit_preprocess(const RawTable& table, std::span<const Index> rows = {});

struct PreprocessResult {
  Dataset dataset;
  std::size_t unseen_categories = 0;
};

// Standardizes numeric columns, imputes missing values with 0 and one-hot
// encodes categoricals. Unseen categories encode as all zeros.
PreprocessResult preprocess(const RawTable& table, const PreprocessSpec& spec,
                            std::span<const Index> rows = {});

// Minority rows kept so that n_majority / n_minority reaches `target_ir`
// (minority count floored). Returned indices are sorted.
std::vector<Index> imbalance_rows(const Labels& labels, double target_ir, std::uint64_t seed);
Dataset make_imbalanced(const Dataset& ds, double target_ir, std::uint64_t seed);

struct SplitFractions {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;
};

struct SplitRows {
  std::vector<Index> train;
  std::vector<Index> validation;
  std::vector<Index> test;
};

// Stratified split of row indices; each part receives at least one row of
// each class.
SplitRows split_rows(const Labels& labels, const SplitFractions& fractions, std::uint64_t seed);

// Held-out partition. Every read of the data is counted so callers can audit
// that model selection never looked at it.
class TestPartition {
 public:
  TestPartition() = default;
  explicit TestPartition(Dataset ds) : data_(std::move(ds)) {}

  const Dataset& read() const {
    ++reads_;
    return data_;
  }
  Index rows() const { return data_.rows(); }
  Index n_minority() const { return data_.n_minority(); }
  std::size_t reads() const { return reads_; }
  void reset_audit() { reads_ = 0; }

 private:
  Dataset data_;
  mutable std::size_t reads_ = 0;
};

struct SplitDataset {
  Dataset train;
  Dataset validation;
  TestPartition test;
};

SplitDataset split(const Dataset& ds, const SplitFractions& fractions, std::uint64_t seed);

// Imbalance, split, then fit preprocessing on the training rows only.
SplitDataset prepare(const RawTable& table, std::optional<double> target_ir, std::uint64_t seed,
                     const SplitFractions& fractions = {});

// Same protocol for an all-numeric in-memory dataset: numeric columns are
// standardized with training-part statistics.
SplitDataset prepare(const Dataset& ds, std::optional<double> target_ir, std::uint64_t seed,
                     const SplitFractions& fractions = {});

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace autosmote::data
