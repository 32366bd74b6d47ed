#include "autosmote/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace autosmote::data {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

bool is_missing(std::string_view s) {
  s = trim(s);
  if (s.empty() || s == "?") return true;
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  return lower == "na" || lower == "nan" || lower == "null";
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

// RFC-4180 records: quoted fields, doubled quotes, CRLF or LF line endings.
std::vector<std::vector<std::string>> parse_records(std::string_view text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    bool blank = record.size() == 1 && record.front().empty();
    if (!blank) records.push_back(std::move(record));
    record.clear();
    field_started = false;
  };
  if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
      static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF) {
    i = 3;
  }
  for (; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
    } else if (c == '\n') {
      end_record();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw DataError("csv: unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

}  // namespace

RawTable parse_csv(std::string_view text, const std::string& label_column, const Schema& schema) {
  auto records = parse_records(text);
  if (records.empty()) throw DataError("csv: empty input (header row required)");
  const auto& header = records.front();
  if (records.size() < 2) throw DataError("csv: table has no data rows");

  auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) throw DataError("csv: label column '" + label_column + "' not found");
  const auto label_pos = static_cast<std::size_t>(label_it - header.begin());

  RawTable table;
  const std::size_t n_rows = records.size() - 1;
  std::vector<std::string> raw_labels;
  raw_labels.reserve(n_rows);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == label_pos) continue;
    table.column_names.push_back(header[c]);
    table.columns.emplace_back();
    table.columns.back().reserve(n_rows);
  }
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() != header.size()) {
      throw DataError("csv: row " + std::to_string(r) + " has " + std::to_string(rec.size()) +
                      " fields, expected " + std::to_string(header.size()));
    }
    std::size_t out = 0;
    for (std::size_t c = 0; c < rec.size(); ++c) {
      if (c == label_pos) {
        if (is_missing(rec[c])) throw DataError("csv: missing label in row " + std::to_string(r));
        raw_labels.emplace_back(trim(rec[c]));
        continue;
      }
      if (is_missing(rec[c])) {
        table.columns[out].push_back(std::nullopt);
      } else {
        table.columns[out].emplace_back(std::string(trim(rec[c])));
      }
      ++out;
    }
  }

  std::map<std::string, std::size_t> counts;
  for (const auto& l : raw_labels) ++counts[l];
  if (counts.size() != 2) {
    throw DataError("csv: label column must have exactly two distinct values, found " +
                    std::to_string(counts.size()));
  }
  auto first = counts.begin();
  auto second = std::next(first);
  // Rarer value is the minority; on equal counts the lexicographically larger one.
  const bool first_is_minority = first->second < second->second;
  table.minority_label = first_is_minority ? first->first : second->first;
  table.majority_label = first_is_minority ? second->first : first->first;
  table.labels.resize(static_cast<Index>(n_rows));
  for (std::size_t r = 0; r < n_rows; ++r) {
    table.labels(static_cast<Index>(r)) = raw_labels[r] == table.minority_label ? kMinority : kMajority;
  }

  table.kinds.resize(table.columns.size());
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (auto hint = schema.find(table.column_names[c]); hint != schema.end()) {
      table.kinds[c] = hint->second;
      if (hint->second == ColumnKind::numeric) {
        for (const auto& cell : table.columns[c]) {
          if (cell && !parse_number(*cell)) {
            throw DataError("csv: non-numeric value '" + *cell + "' in numeric column '" +
                            table.column_names[c] + "'");
          }
        }
      }
      continue;
    }
    bool numeric = std::all_of(table.columns[c].begin(), table.columns[c].end(),
                               [](const auto& cell) { return !cell || parse_number(*cell).has_value(); });
    table.kinds[c] = numeric ? ColumnKind::numeric : ColumnKind::categorical;
  }
  return table;
}

RawTable load_csv(const std::filesystem::path& path, const std::string& label_column, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("csv: cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), label_column, schema);
}

Dataset::Dataset(Matrix x, Labels y) : features(std::move(x)), labels(std::move(y)) {
  if (features.rows() != labels.size()) {
    throw std::invalid_argument("Dataset: feature rows and label count differ");
  }
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels(i) != kMajority && labels(i) != kMinority) {
      throw std::invalid_argument("Dataset: labels must be 0 or 1");
    }
  }
  synthetic.assign(static_cast<std::size_t>(labels.size()), false);
  origin.resize(static_cast<std::size_t>(labels.size()));
  std::iota(origin.begin(), origin.end(), 0L);
}

double Dataset::imbalance_ratio() const {
  const auto n_min = n_minority();
  if (n_min == 0) throw DataError("imbalance ratio undefined without minority rows");
  return static_cast<double>(n_majority()) / static_cast<double>(n_min);
}

Dataset Dataset::subset(std::span<const Index> rows) const {
  Dataset out;
  out.features.resize(static_cast<Index>(rows.size()), dims());
  out.labels.resize(static_cast<Index>(rows.size()));
  out.synthetic.resize(rows.size());
  out.origin.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Index r = rows[i];
    if (r < 0 || r >= this->rows()) throw std::out_of_range("Dataset::subset: row index out of range");
    out.features.row(static_cast<Index>(i)) = features.row(r);
    out.labels(static_cast<Index>(i)) = labels(r);
    out.synthetic[i] = synthetic[static_cast<std::size_t>(r)];
    out.origin[i] = origin[static_cast<std::size_t>(r)];
  }
  return out;
}

std::vector<Index> Dataset::minority_rows() const {
  std::vector<Index> rows;
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels(i) == kMinority) rows.push_back(i);
  }
  return rows;
}

std::vector<Index> Dataset::majority_rows() const {
  std::vector<Index> rows;
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels(i) == kMajority) rows.push_back(i);
  }
  return rows;
}

Matrix Dataset::minority_features() const {
  const auto rows = minority_rows();
  Matrix out(static_cast<Index>(rows.size()), dims());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = features.row(rows[i]);
  return out;
}

Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.rows() > 0 && b.rows() > 0 && a.dims() != b.dims()) {
    throw std::invalid_argument("concat: feature dimensions differ");
  }
  const Index dims = a.rows() > 0 ? a.dims() : b.dims();
  Dataset out;
  out.features.resize(a.rows() + b.rows(), dims);
  if (a.rows() > 0) out.features.topRows(a.rows()) = a.features;
  if (b.rows() > 0) out.features.bottomRows(b.rows()) = b.features;
  out.labels.resize(a.rows() + b.rows());
  out.labels << a.labels, b.labels;
  out.synthetic = a.synthetic;
  out.synthetic.insert(out.synthetic.end(), b.synthetic.begin(), b.synthetic.end());
  out.origin = a.origin;
  out.origin.insert(out.origin.end(), b.origin.begin(), b.origin.end());
  return out;
}

Index PreprocessSpec::output_dims() const {
  Index d = static_cast<Index>(numeric_columns.size());
  for (const auto& vocab : category_vocabularies) d += static_cast<Index>(vocab.size());
  return d;
}

namespace {

std::vector<Index> all_rows_if_empty(std::span<const Index> rows, std::size_t n) {
  if (!rows.empty()) return {rows.begin(), rows.end()};
  std::vector<Index> all(n);
  std::iota(all.begin(), all.end(), Index{0});
  return all;
}

}  // namespace

PreprocessSpec fit_preprocess(const RawTable& table, std::span<const Index> rows) {
  const auto fit_rows = all_rows_if_empty(rows, table.rows());
  PreprocessSpec spec;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    const auto& column = table.columns[c];
    if (table.kinds[c] == ColumnKind::numeric) {
      double sum = 0.0;
      std::size_t n = 0;
      for (Index r : fit_rows) {
        if (const auto& cell = column[static_cast<std::size_t>(r)]) {
          sum += *parse_number(*cell);
          ++n;
        }
      }
      const double mean = n > 0 ? sum / static_cast<double>(n) : 0.0;
      double ss = 0.0;
      for (Index r : fit_rows) {
        if (const auto& cell = column[static_cast<std::size_t>(r)]) {
          const double d = *parse_number(*cell) - mean;
          ss += d * d;
        }
      }
      double sd = n > 0 ? std::sqrt(ss / static_cast<double>(n)) : 0.0;
      if (!(sd > 0.0)) sd = 1.0;
      spec.numeric_columns.push_back(c);
      spec.means.push_back(mean);
      spec.stddevs.push_back(sd);
    } else {
      std::set<std::string> vocab;
      for (Index r : fit_rows) {
        if (const auto& cell = column[static_cast<std::size_t>(r)]) vocab.insert(*cell);
      }
      spec.categorical_columns.push_back(c);
      spec.category_vocabularies.emplace_back(vocab.begin(), vocab.end());
    }
  }
  return spec;
}

PreprocessResult preprocess(const RawTable& table, const PreprocessSpec& spec, std::span<const Index> rows) {
  if (spec.numeric_columns.size() + spec.categorical_columns.size() != table.columns.size()) {
    throw DataError("preprocess: spec does not cover the table's columns");
  }
  const auto out_rows = all_rows_if_empty(rows, table.rows());
  PreprocessResult result;
  Matrix x = Matrix::Zero(static_cast<Index>(out_rows.size()), spec.output_dims());
  Labels y(static_cast<Index>(out_rows.size()));
  for (std::size_t i = 0; i < out_rows.size(); ++i) {
    const auto r = static_cast<std::size_t>(out_rows[i]);
    const auto row = static_cast<Index>(i);
    y(row) = table.labels(static_cast<Index>(r));
    Index col = 0;
    for (std::size_t j = 0; j < spec.numeric_columns.size(); ++j, ++col) {
      const auto& cell = table.columns[spec.numeric_columns[j]][r];
      if (cell) x(row, col) = (*parse_number(*cell) - spec.means[j]) / spec.stddevs[j];
    }
    for (std::size_t j = 0; j < spec.categorical_columns.size(); ++j) {
      const auto& vocab = spec.category_vocabularies[j];
      const auto& cell = table.columns[spec.categorical_columns[j]][r];
      if (cell) {
        auto it = std::lower_bound(vocab.begin(), vocab.end(), *cell);
        if (it != vocab.end() && *it == *cell) {
          x(row, col + static_cast<Index>(it - vocab.begin())) = 1.0;
        } else {
          ++result.unseen_categories;
        }
      }
      col += static_cast<Index>(vocab.size());
    }
  }
  result.dataset = Dataset(std::move(x), std::move(y));
  for (std::size_t i = 0; i < out_rows.size(); ++i) result.dataset.origin[i] = static_cast<long>(out_rows[i]);
  return result;
}

std::vector<Index> imbalance_rows(const Labels& labels, double target_ir, std::uint64_t seed) {
  std::vector<Index> majority;
  std::vector<Index> minority;
  for (Index i = 0; i < labels.size(); ++i) (labels(i) == kMinority ? minority : majority).push_back(i);
  if (minority.empty()) throw DataError("make_imbalanced: no minority rows");
  if (!(target_ir > 0.0)) throw std::invalid_argument("make_imbalanced: target IR must be positive");
  const double current = static_cast<double>(majority.size()) / static_cast<double>(minority.size());
  if (target_ir < current * (1.0 - 1e-12)) {
    throw std::invalid_argument("make_imbalanced: target IR is below the current IR");
  }
  auto keep = static_cast<std::size_t>(std::floor(static_cast<double>(majority.size()) / target_ir + 1e-9));
  keep = std::min(keep, minority.size());
  if (keep < 2) throw DataError("make_imbalanced: target IR would leave fewer than 2 minority rows");

  std::vector<Index> rows = majority;
  if (keep == minority.size()) {
    rows.insert(rows.end(), minority.begin(), minority.end());
  } else {
    std::mt19937_64 rng(seed);
    std::vector<Index> chosen;
    std::sample(minority.begin(), minority.end(), std::back_inserter(chosen), static_cast<std::ptrdiff_t>(keep), rng);
    rows.insert(rows.end(), chosen.begin(), chosen.end());
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

Dataset make_imbalanced(const Dataset& ds, double target_ir, std::uint64_t seed) {
  const auto rows = imbalance_rows(ds.labels, target_ir, seed);
  return ds.subset(rows);
}

SplitRows split_rows(const Labels& labels, const SplitFractions& fractions, std::uint64_t seed) {
  const double total = fractions.train + fractions.validation + fractions.test;
  if (fractions.train <= 0 || fractions.validation <= 0 || fractions.test <= 0 || std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("split: fractions must be positive and sum to 1");
  }
  std::mt19937_64 rng(seed);
  SplitRows out;
  for (int cls : {kMajority, kMinority}) {
    std::vector<Index> members;
    for (Index i = 0; i < labels.size(); ++i) {
      if (labels(i) == cls) members.push_back(i);
    }
    const auto n = static_cast<double>(members.size());
    if (members.size() < 3) {
      throw DataError("split: class " + std::to_string(cls) + " has " + std::to_string(members.size()) +
                      " rows; at least 3 are needed to cover every part");
    }
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fractions.validation * n)));
    const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fractions.test * n)));
    if (n_val + n_test >= members.size()) {
      throw DataError("split: class " + std::to_string(cls) + " too small for the requested fractions");
    }
    const auto n_train = members.size() - n_val - n_test;
    out.train.insert(out.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.validation.insert(out.validation.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train),
                          members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    out.test.insert(out.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), members.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

SplitDataset split(const Dataset& ds, const SplitFractions& fractions, std::uint64_t seed) {
  const auto parts = split_rows(ds.labels, fractions, seed);
  return {ds.subset(parts.train), ds.subset(parts.validation), TestPartition(ds.subset(parts.test))};
}

SplitDataset prepare(const RawTable& table, std::optional<double> target_ir, std::uint64_t seed,
                     const SplitFractions& fractions) {
  std::vector<Index> rows;
  if (target_ir) {
    rows = imbalance_rows(table.labels, *target_ir, derive_seed(seed, "imbalance"));
  } else {
    rows.resize(table.rows());
    std::iota(rows.begin(), rows.end(), Index{0});
  }
  Labels kept(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) kept(static_cast<Index>(i)) = table.labels(rows[i]);
  const auto local = split_rows(kept, fractions, derive_seed(seed, "split"));
  auto to_source = [&](const std::vector<Index>& part) {
    std::vector<Index> src(part.size());
    for (std::size_t i = 0; i < part.size(); ++i) src[i] = rows[static_cast<std::size_t>(part[i])];
    return src;
  };
  const auto train_rows = to_source(local.train);
  const auto spec = fit_preprocess(table, train_rows);
  SplitDataset out;
  out.train = preprocess(table, spec, train_rows).dataset;
  out.validation = preprocess(table, spec, to_source(local.validation)).dataset;
  out.test = TestPartition(preprocess(table, spec, to_source(local.test)).dataset);
  return out;
}

SplitDataset prepare(const Dataset& ds, std::optional<double> target_ir, std::uint64_t seed,
                     const SplitFractions& fractions) {
  const Dataset source = target_ir ? make_imbalanced(ds, *target_ir, derive_seed(seed, "imbalance")) : ds;
  const auto parts = split_rows(source.labels, fractions, derive_seed(seed, "split"));
  Dataset train = source.subset(parts.train);
  const RowVector mean = train.features.colwise().mean();
  RowVector sd = ((train.features.rowwise() - mean).array().square().colwise().sum() /
                  static_cast<double>(train.rows()))
                     .sqrt();
  for (Index j = 0; j < sd.size(); ++j) {
    if (!(sd(j) > 0.0)) sd(j) = 1.0;
  }
  auto standardize = [&](Dataset part) {
    part.features = (part.features.rowwise() - mean).array().rowwise() / sd.array();
    return part;
  };
  return {standardize(std::move(train)), standardize(source.subset(parts.validation)),
          TestPartition(standardize(source.subset(parts.test)))};
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "autosmote-dataset";
  j["version"] = 1;
  j["rows"] = ds.rows();
  j["dims"] = ds.dims();
  std::vector<double> flat(static_cast<std::size_t>(ds.features.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(flat.data(), ds.rows(),
                                                                                      ds.dims()) = ds.features;
  j["features"] = flat;
  j["labels"] = std::vector<int>(ds.labels.data(), ds.labels.data() + ds.labels.size());
  j["synthetic"] = ds.synthetic;
  j["origin"] = ds.origin;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset cache '" + path.string() + "'");
  out << j.dump();
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset cache '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("dataset cache: ") + e.what());
  }
  if (j.value("format", "") != "autosmote-dataset" || j.value("version", 0) != 1) {
    throw DataError("dataset cache: unsupported format or version");
  }
  const Index rows = j.at("rows").get<Index>();
  const Index dims = j.at("dims").get<Index>();
  auto flat = j.at("features").get<std::vector<double>>();
  auto labels = j.at("labels").get<std::vector<int>>();
  if (static_cast<Index>(flat.size()) != rows * dims || static_cast<Index>(labels.size()) != rows) {
    throw DataError("dataset cache: shape mismatch");
  }
  Matrix x = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(flat.data(), rows, dims);
  Dataset ds(std::move(x), Eigen::Map<Labels>(labels.data(), rows));
  ds.synthetic = j.at("synthetic").get<std::vector<bool>>();
  ds.origin = j.at("origin").get<std::vector<long>>();
  return ds;
}

}  // namespace autosmote::data
