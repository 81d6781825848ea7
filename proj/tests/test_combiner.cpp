#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "mlod/combiner.hpp"
#include "mlod/statfn.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mlod;
using doctest::Approx;
using testutil::kind_of;

namespace {

using P = std::vector<double>;

bool ood(const DetectionResult& r) { return r.decision == Decision::ood; }

bool oracle_decision(CombinerMethod m, const P& p, double alpha) {
  switch (m) {
    case CombinerMethod::bh: return oracle::bh(p, alpha);
    case CombinerMethod::adabh: return oracle::adabh(p, alpha);
    case CombinerMethod::by: return oracle::by(p, alpha);
    case CombinerMethod::fisher: return oracle::fisher(p, alpha);
    case CombinerMethod::cauchy: return oracle::cauchy(p, alpha);
    case CombinerMethod::naive_and: return oracle::naive_and(p, alpha);
    case CombinerMethod::last_layer: return oracle::last_layer(p, alpha);
  }
  return false;
}

P random_p(std::size_t m, std::mt19937_64& rng) {
  // mix of uniform and small p-values so both verdicts occur often
  P p = testutil::uniform01(m, rng);
  for (auto& v : p)
    if (rng() % 3 == 0) v = std::pow(v, 4.0);
  return p;
}

}  // namespace

TEST_CASE("names round trip") {
  for (CombinerMethod m : kAllCombiners) CHECK(combiner_method_from_string(to_string(m)) == m);
  CHECK(display_name(CombinerMethod::fisher) == "MLOD-Fisher");
  CHECK(display_name(CombinerMethod::last_layer) == "Layer@last");
  CHECK(kind_of([] { combiner_method_from_string("holm"); }) == ErrorKind::ConfigError);
}

TEST_CASE("BH examples") {
  auto r = combine_bh(P{0.01, 0.20, 0.30}, 0.05);
  CHECK(ood(r));
  CHECK(r.rejected_layers == std::vector<int>{1});
  CHECK_FALSE(ood(combine_bh(P{0.10, 0.20, 0.90}, 0.05)));
  CHECK_FALSE(ood(combine_bh(P{1, 1, 1}, 0.99)));
  // rejected layers follow original positions
  r = combine_bh(P{0.5, 0.001, 0.02}, 0.05);
  CHECK(r.rejected_layers == std::vector<int>{2, 3});
}

TEST_CASE("adaptive BH examples") {
  auto r = combine_adabh(P{0.10, 0.20, 0.90}, 0.05);
  CHECK_FALSE(ood(r));
  CHECK_FALSE(r.m0_hat.has_value());
  r = combine_adabh(P{0.01, 0.04, 0.90}, 0.05);
  CHECK(ood(r));
  CHECK(r.m0_hat == 3);
  CHECK(r.rejected_layers == std::vector<int>{1});
  // slopes nondecreasing throughout: falls back to m and matches BH
  const P flat{0.001, 0.6, 0.75};
  r = combine_adabh(flat, 0.05);
  CHECK(r.m0_hat == 3);
  CHECK(ood(r) == ood(combine_bh(flat, 0.05)));
  CHECK(r.rejected_layers == combine_bh(flat, 0.05).rejected_layers);
}

TEST_CASE("BY examples") {
  CHECK_FALSE(ood(combine_by(P{0.01, 0.20, 0.30}, 0.05)));
  CHECK(ood(combine_by(P{0.005, 0.20, 0.30}, 0.05)));
  for (double p : {0.01, 0.049, 0.051, 0.5}) {
    CHECK(ood(combine_by(P{p}, 0.05)) == ood(combine_bh(P{p}, 0.05)));
    CHECK(ood(combine_by(P{p}, 0.05)) == (p <= 0.05));
  }
}

TEST_CASE("Fisher examples") {
  CHECK_FALSE(ood(combine_fisher(P{1 - 1e-12, 1 - 1e-12, 1 - 1e-12}, 0.9)));
  auto r = combine_fisher(P{0.5, 0.5}, 0.05);
  CHECK(r.statistic == Approx(-4 * std::log(0.5)));
  CHECK_FALSE(ood(r));
  r = combine_fisher(P{0.001, 0.001}, 0.05);
  CHECK(r.statistic == Approx(27.631).epsilon(1e-4));
  CHECK(ood(r));
  CHECK(FusionRule({CombinerMethod::fisher, 0.05, {}}, 2).critical_value() == Approx(9.4877).epsilon(1e-5));
}

TEST_CASE("Cauchy examples") {
  auto r = combine_cauchy(P{0.5, 0.5}, 0.05);
  CHECK(std::fabs(r.statistic) < 1e-15);
  CHECK_FALSE(ood(combine_cauchy(P{0.5, 0.5}, 0.49)));
  r = combine_cauchy(P{0.01}, 0.05);
  CHECK(r.statistic == Approx(31.8205).epsilon(1e-5));
  CHECK(ood(r));
  r = combine_cauchy(P{0.9, 0.9}, 0.05);
  CHECK(r.statistic == Approx(-3.0777).epsilon(1e-4));
  CHECK_FALSE(ood(r));

  // weights shift the statistic toward the weighted layer
  const P p{0.001, 0.9};
  const P heavy{0.1, 0.9};
  CHECK(combine_cauchy(p, 0.05, heavy).statistic < combine_cauchy(p, 0.05).statistic);
}

TEST_CASE("Cauchy weight validation") {
  CHECK(kind_of([] { combine_cauchy(P{0.1, 0.2}, 0.05, P{1.0}); }) == ErrorKind::BadWeights);
  CHECK(kind_of([] { combine_cauchy(P{0.1, 0.2}, 0.05, P{0.7, 0.7}); }) == ErrorKind::BadWeights);
  CHECK(kind_of([] { combine_cauchy(P{0.1, 0.2}, 0.05, P{1.5, -0.5}); }) == ErrorKind::BadWeights);
}

TEST_CASE("baselines") {
  auto r = naive_and(P{0.04, 0.50}, 0.05);
  CHECK(ood(r));
  CHECK(r.rejected_layers == std::vector<int>{1});
  CHECK_FALSE(ood(naive_and(P{0.06, 0.06}, 0.05)));
  CHECK_FALSE(ood(last_layer(P{0.001, 0.50}, 0.05)));
  r = last_layer(P{0.5, 0.01}, 0.05);
  CHECK(ood(r));
  CHECK(r.rejected_layers == std::vector<int>{2});
}

TEST_CASE("input validation") {
  CHECK(kind_of([] { combine_bh(P{}, 0.05); }) == ErrorKind::EmptyPVector);
  CHECK(kind_of([] { combine_bh(P{0.1, 1.2}, 0.05); }) == ErrorKind::InvalidPValue);
  CHECK(kind_of([] { combine_bh(P{0.1, NAN}, 0.05); }) == ErrorKind::InvalidPValue);
  CHECK(kind_of([] { combine_fisher(P{0.0, 0.5}, 0.05); }) == ErrorKind::InvalidPValue);
  CHECK(kind_of([] { combine_cauchy(P{1.0, 0.5}, 0.05); }) == ErrorKind::InvalidPValue);
  CHECK_FALSE(kind_of([] { combine_bh(P{0.0, 1.0}, 0.05); }).has_value());
  CHECK(kind_of([] { combine_bh(P{0.1}, 0.0); }) == ErrorKind::OutOfDomain);
  const FusionRule rule({CombinerMethod::bh, 0.05, {}}, 3);
  CHECK(kind_of([&] { rule.detect(P{0.1, 0.2}); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("every method matches its naive reference") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20000; ++trial) {
    const std::size_t m = 1 + rng() % 32;
    const double alpha = std::array{0.01, 0.05, 0.1}[rng() % 3];
    const P p = random_p(m, rng);
    for (CombinerMethod method : kAllCombiners) {
      const FusionRule rule({method, alpha, {}}, m);
      const bool expect = oracle_decision(method, p, alpha);
      CHECK(rule.is_ood(p) == expect);
      CHECK(ood(rule.detect(p)) == expect);
    }
  }
}

TEST_CASE("BY rejections are a subset of BH rejections") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 5000; ++trial) {
    const P p = random_p(1 + rng() % 20, rng);
    const auto by = combine_by(p, 0.05).rejected_layers;
    const auto bh = combine_bh(p, 0.05).rejected_layers;
    CHECK(std::includes(bh.begin(), bh.end(), by.begin(), by.end()));
  }
}

TEST_CASE("OOD at alpha stays OOD at any larger alpha") {
  std::mt19937_64 rng(43);
  const double grid[] = {0.001, 0.01, 0.02, 0.05, 0.1, 0.2, 0.4};
  for (int trial = 0; trial < 3000; ++trial) {
    const P p = random_p(1 + rng() % 16, rng);
    for (CombinerMethod method : kAllCombiners) {
      bool seen = false;
      for (double a : grid) {
        const bool now = ood(combine(p, {method, a, {}}));
        CHECK((!seen || now));
        seen = seen || now;
      }
    }
  }
}

TEST_CASE("all methods but the last-layer rule ignore layer order") {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 3000; ++trial) {
    P p = random_p(2 + rng() % 12, rng);
    P q = p;
    std::shuffle(q.begin(), q.end(), rng);
    for (CombinerMethod method : kAllCombiners) {
      if (method == CombinerMethod::last_layer) continue;
      CHECK(ood(combine(p, {method, 0.05, {}})) == ood(combine(q, {method, 0.05, {}})));
    }
  }
}

TEST_CASE("one layer collapses every method to p < alpha") {
  for (double alpha : {0.01, 0.05, 0.1}) {
    for (int i = 1; i < 2000; ++i) {
      const double p = i / 2000.0 + 1.0 / 7919.0;  // never equal to alpha
      if (p >= 1.0) continue;
      for (CombinerMethod method : kAllCombiners) CHECK(ood(combine(P{p}, {method, alpha, {}})) == (p < alpha));
    }
  }
}

TEST_CASE("combined scores") {
  CHECK(combined_score(P{0.3, 0.07}, {CombinerMethod::last_layer, 0.05, {}}) == 0.07);
  CHECK(combined_score(P{0.3, 0.07}, {CombinerMethod::naive_and, 0.05, {}}) == 0.07);
  CHECK(combined_score(P{0.01, 0.2, 0.3}, {CombinerMethod::bh, 0.05, {}}) == Approx(0.03));
  CHECK(combined_score(P{0.5, 0.5}, {CombinerMethod::fisher, 0.05, {}}) == Approx(4 * std::log(0.5)));
  CHECK(kind_of([] { combined_score(P{0.5}, {CombinerMethod::adabh, 0.05, {}}); }) == ErrorKind::UnsupportedMethod);

  std::mt19937_64 rng(45);
  for (int trial = 0; trial < 100000; ++trial) {
    const P p = random_p(1 + rng() % 32, rng);
    const double alpha = std::uniform_real_distribution<double>(0.001, 0.3)(rng);
    CHECK((combined_score(p, {CombinerMethod::bh, alpha, {}}) <= alpha) == oracle::bh(p, alpha));
  }

  // Fisher score rises strictly as any single p-value grows
  P p{0.2, 0.3, 0.4};
  const double base = combined_score(p, {CombinerMethod::fisher, 0.05, {}});
  p[1] = 0.25;
  CHECK(combined_score(p, {CombinerMethod::fisher, 0.05, {}}) < base);
}

TEST_CASE("batch decisions match the serial reference") {
  std::mt19937_64 rng(46);
  const std::size_t rows = 4000, m = 6;
  PValueMatrix p(rows, m);
  for (std::size_t i = 0; i < rows; ++i) {
    const P r = random_p(m, rng);
    std::copy(r.begin(), r.end(), p.row(i).begin());
  }
  for (CombinerMethod method : kAllCombiners) {
    const FusionRule rule({method, 0.05, {}}, m);
    const auto par = decide_batch(rule, p);
    CHECK(par == decide_batch_serial(rule, p));
    for (std::size_t i = 0; i < rows; i += 97) CHECK(static_cast<bool>(par[i]) == rule.is_ood(p.row(i)));
  }
  const FusionRule wrong({CombinerMethod::bh, 0.05, {}}, m + 1);
  CHECK(kind_of([&] { decide_batch(wrong, p); }) == ErrorKind::ShapeMismatch);

  p(17, 3) = 1.5;
  const FusionRule bh({CombinerMethod::bh, 0.05, {}}, m);
  CHECK(kind_of([&] { decide_batch(bh, p); }) == ErrorKind::InvalidPValue);
}
