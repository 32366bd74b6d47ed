#include "autosmote/metrics.hpp"

#include <cmath>

namespace autosmote::metrics {

Metric parse_metric(const std::string& name) {
  if (name == "macro_f1") return Metric::macro_f1;
  if (name == "mcc") return Metric::mcc;
  throw ConfigError("unknown metric '" + name + "' (expected macro_f1 or mcc)");
}

std::string to_string(Metric m) { return m == Metric::macro_f1 ? "macro_f1" : "mcc"; }

ConfusionCounts confusion(const Labels& y_true, const Labels& y_pred) {
  if (y_true.size() != y_pred.size()) throw std::invalid_argument("confusion: length mismatch");
  if (y_true.size() == 0) throw std::invalid_argument("confusion: empty input");
  ConfusionCounts c;
  for (Index i = 0; i < y_true.size(); ++i) {
    const int t = y_true(i);
    const int p = y_pred(i);
    if ((t != 0 && t != 1) || (p != 0 && p != 1)) throw std::invalid_argument("confusion: labels must be 0 or 1");
    if (t == 1) {
      p == 1 ? ++c.tp : ++c.fn;
    } else {
      p == 1 ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

namespace {

// 2tp / (2tp + fp + fn) for the class treated as positive.
double class_f1(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
  const std::int64_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace

double macro_f1(const ConfusionCounts& c) {
  if (c.total() <= 0) throw std::invalid_argument("macro_f1: no instances");
  return 0.5 * (class_f1(c.tp, c.fp, c.fn) + class_f1(c.tn, c.fn, c.fp));
}

double mcc(const ConfusionCounts& c) {
  if (c.total() <= 0) throw std::invalid_argument("mcc: no instances");
  const double tp = static_cast<double>(c.tp);
  const double fp = static_cast<double>(c.fp);
  const double tn = static_cast<double>(c.tn);
  const double fn = static_cast<double>(c.fn);
  const double a = tp + fp, b = tp + fn, d = tn + fp, e = tn + fn;
  if (a == 0 || b == 0 || d == 0 || e == 0) return 0.0;
  return (tp * tn - fp * fn) / std::sqrt(a * b * d * e);
}

double score(Metric m, const ConfusionCounts& c) { return m == Metric::macro_f1 ? macro_f1(c) : mcc(c); }

}  // namespace autosmote::metrics
