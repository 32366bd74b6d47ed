#pragma once

#include <cstdint>
#include <string>

#include "autosmote/core.hpp"

namespace autosmote::metrics {

// Minority (label 1) is the positive class.
struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
};

enum class Metric { macro_f1, mcc };

Metric parse_metric(const std::string& name);
std::string to_string(Metric m);

ConfusionCounts confusion(const Labels& y_true, const Labels& y_pred);

// Mean of the per-class F1 scores; a class whose F1 denominator is zero scores 0.
double macro_f1(const ConfusionCounts& c);

// Matthews correlation; 0 when any marginal is empty.
double mcc(const ConfusionCounts& c);

double score(Metric m, const ConfusionCounts& c);

}  // namespace autosmote::metrics
