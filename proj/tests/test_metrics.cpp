#include <doctest.h>

#include <cmath>
#include <random>

#include "autosmote/metrics.hpp"

using namespace autosmote;
using namespace autosmote::metrics;

namespace {

// Straight from the definitions, one class at a time.
double brute_macro_f1(const Labels& t, const Labels& p) {
  double sum = 0.0;
  for (int cls : {0, 1}) {
    double tp = 0, fp = 0, fn = 0;
    for (Index i = 0; i < t.size(); ++i) {
      if (p(i) == cls && t(i) == cls) ++tp;
      if (p(i) == cls && t(i) != cls) ++fp;
      if (p(i) != cls && t(i) == cls) ++fn;
    }
    const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    sum += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
  }
  return sum / 2;
}

double brute_mcc(const Labels& t, const Labels& p) {
  // Pearson correlation of the two 0/1 vectors.
  const double n = static_cast<double>(t.size());
  const double mt = t.cast<double>().sum() / n, mp = p.cast<double>().sum() / n;
  double cov = 0, vt = 0, vp = 0;
  for (Index i = 0; i < t.size(); ++i) {
    cov += (t(i) - mt) * (p(i) - mp);
    vt += (t(i) - mt) * (t(i) - mt);
    vp += (p(i) - mp) * (p(i) - mp);
  }
  return vt == 0 || vp == 0 ? 0.0 : cov / std::sqrt(vt * vp);
}

}  // namespace

TEST_CASE("hand cases") {
  CHECK(macro_f1({5, 5, 5, 5}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(mcc({90, 10, 80, 20}) == doctest::Approx(0.7035).epsilon(1e-4));
  CHECK(mcc({0, 0, 10, 10}) == 0.0);
  CHECK(macro_f1({10, 0, 10, 0}) == 1.0);
  CHECK(mcc({10, 0, 10, 0}) == doctest::Approx(1.0));
  CHECK(mcc({0, 10, 0, 10}) == doctest::Approx(-1.0));
}

TEST_CASE("agrees with brute force on random labelings") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 60);
    const double p1 = std::uniform_real_distribution<double>(0, 1)(rng);
    std::bernoulli_distribution b(p1), q(std::uniform_real_distribution<double>(0, 1)(rng));
    Labels t(n), p(n);
    for (int i = 0; i < n; ++i) {
      t(i) = b(rng);
      p(i) = q(rng);
    }
    const auto c = confusion(t, p);
    CHECK(c.total() == n);
    CHECK(std::abs(macro_f1(c) - brute_macro_f1(t, p)) <= 1e-12);
    CHECK(std::abs(mcc(c) - brute_mcc(t, p)) <= 1e-12);
  }
}

TEST_CASE("ranges and symmetry") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    ConfusionCounts c{static_cast<std::int64_t>(rng() % 20), static_cast<std::int64_t>(rng() % 20),
                      static_cast<std::int64_t>(rng() % 20), static_cast<std::int64_t>(rng() % 20)};
    if (c.total() == 0) continue;
    CHECK(macro_f1(c) >= 0.0);
    CHECK(macro_f1(c) <= 1.0);
    CHECK(std::abs(mcc(c)) <= 1.0 + 1e-12);
    // Swapping the roles of the classes leaves both scores unchanged.
    ConfusionCounts swapped{c.tn, c.fn, c.tp, c.fp};
    CHECK(macro_f1(swapped) == doctest::Approx(macro_f1(c)));
    CHECK(mcc(swapped) == doctest::Approx(mcc(c)));
  }
}

TEST_CASE("invalid input") {
  CHECK_THROWS_AS(confusion(Labels::Zero(3), Labels::Zero(4)), std::invalid_argument);
  CHECK_THROWS(confusion(Labels(), Labels()));
  Labels bad(2);
  bad << 0, 2;
  CHECK_THROWS(confusion(bad, Labels::Zero(2)));
  CHECK(parse_metric("mcc") == Metric::mcc);
  CHECK_THROWS_AS(parse_metric("auc"), ConfigError);
}
