#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "mlod/knn.hpp"
#include "mlod/scorers.hpp"
#include "test_util.hpp"

using namespace mlod;
using doctest::Approx;
using testutil::kind_of;

namespace {

double msp(std::vector<double> l) { return msp_score(l); }
double energy(std::vector<double> l, double t) { return energy_score(l, t); }
double odin(std::vector<double> l, double t) { return odin_score(l, t); }

LayerSpec logits_layer(std::size_t classes) { return {"head", LayerKind::logits, classes, 1}; }

}  // namespace

TEST_CASE("msp values") {
  CHECK(msp({0, 0}) == Approx(0.5).epsilon(1e-15));
  CHECK(msp({1000, 0}) == Approx(1.0).epsilon(1e-12));
  const double e = std::exp(1.0);
  CHECK(msp({1, 2, 3}) == Approx(e * e * e / (e + e * e + e * e * e)).epsilon(1e-14));
  CHECK(msp({1, 2, 3}) == Approx(0.66524).epsilon(1e-5));
}

TEST_CASE("energy values") {
  CHECK(energy({0, 0}, 1) == Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(energy({1, 2, 3}, 1) == Approx(3 + std::log(1 + std::exp(-1.0) + std::exp(-2.0))).epsilon(1e-14));
  CHECK(energy({1, 2, 3}, 1) == Approx(3.40761).epsilon(1e-5));
  CHECK(std::isfinite(energy({1e6, -1e6}, 1)));
  for (double a : {-50.0, 0.0, 3.5, 700.0})
    for (double t : {0.5, 1.0, 1000.0}) CHECK(energy({a, a}, t) == Approx(a + t * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("energy is shift equivariant") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd(0, 3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> l(10);
    for (auto& x : l) x = nd(rng);
    const double a = nd(rng) * 10;
    auto shifted = l;
    for (auto& x : shifted) x += a;
    CHECK(energy(shifted, 2.0) == Approx(energy(l, 2.0) + a).epsilon(1e-12));
  }
}

TEST_CASE("odin values") {
  CHECK(odin({0, 0}, 1000) == Approx(0.5).epsilon(1e-15));
  const double e = std::exp(1.0);
  CHECK(odin({1000, 0}, 1000) == Approx(e / (1 + e)).epsilon(1e-14));
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0, 4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> l(7);
    for (auto& x : l) x = nd(rng);
    CHECK(odin(l, 1.0) == msp(l));
  }
}

TEST_CASE("logit scorer input checks") {
  CHECK(kind_of([] { msp({1.0}); }) == ErrorKind::DegenerateLogits);
  CHECK(kind_of([] { msp({1.0, NAN}); }) == ErrorKind::DegenerateLogits);
  CHECK(kind_of([] { energy({}, 1.0); }) == ErrorKind::DegenerateLogits);
  CHECK(kind_of([] { energy({1, 2}, 0.0); }) == ErrorKind::OutOfDomain);
  CHECK(kind_of([] { odin({1, 2}, -1.0); }) == ErrorKind::OutOfDomain);
}

TEST_CASE("scorer config parsing and defaults") {
  CHECK(scorer_method_from_string("energy") == ScorerMethod::energy);
  CHECK(kind_of([] { scorer_method_from_string("mahalanobis"); }) == ErrorKind::ConfigError);
  CHECK(ScorerConfig::defaults(ScorerMethod::odin).temperature == 1000.0);
  CHECK(ScorerConfig::defaults(ScorerMethod::knn).k == 50);
  ScorerConfig bad = ScorerConfig::defaults(ScorerMethod::knn);
  bad.k = 0;
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::ConfigError);
  CHECK(ScorerConfig::defaults(ScorerMethod::knn).compatible_with(LayerKind::features));
  CHECK_FALSE(ScorerConfig::defaults(ScorerMethod::msp).compatible_with(LayerKind::features));
}

TEST_CASE("score_layer over logits") {
  const FeatureMatrix m(logits_layer(2), "test_id", 2, {0, 0, 1000, 0});
  const auto out = score_layer(m, ScorerConfig::defaults(ScorerMethod::msp), nullptr);
  REQUIRE(out.values.size() == 2);
  CHECK(out.values[0] == Approx(0.5));
  CHECK(out.values[1] == Approx(1.0));
  CHECK(out.layer == m.layer());
}

TEST_CASE("scorer and layer kinds must agree") {
  const FeatureMatrix logits(logits_layer(2), "test_id", 1, {0, 1});
  const FeatureMatrix feats(testutil::features_layer(1, 2), "test_id", 1, {0, 1});
  CHECK(kind_of([&] { score_layer(logits, ScorerConfig::defaults(ScorerMethod::knn), logits); }) ==
        ErrorKind::KindMismatch);
  CHECK(kind_of([&] { score_layer(feats, ScorerConfig::defaults(ScorerMethod::energy), feats); }) ==
        ErrorKind::KindMismatch);
}

TEST_CASE("scoring is permutation equivariant over rows") {
  std::mt19937_64 rng(8);
  const auto layer = testutil::features_layer(1, 6);
  const FeatureMatrix cal(layer, "calibration", 200, testutil::gaussian(200 * 6, rng));
  const FeatureMatrix q(layer, "test_id", 50, testutil::gaussian(50 * 6, rng));
  ScorerConfig cfg = ScorerConfig::defaults(ScorerMethod::knn);
  cfg.k = 7;
  const auto base = score_layer(q, cfg, cal).values;

  std::vector<std::size_t> perm(50);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<float> shuffled;
  for (auto i : perm) shuffled.insert(shuffled.end(), q.row(i).begin(), q.row(i).end());
  const auto moved = score_layer(FeatureMatrix(layer, "test_id", 50, shuffled), cfg, cal).values;
  for (std::size_t i = 0; i < 50; ++i) CHECK(moved[i] == base[perm[i]]);
}

TEST_CASE("parallel and serial score_layer agree") {
  std::mt19937_64 rng(9);
  const auto layer = testutil::features_layer(1, 12);
  const FeatureMatrix cal(layer, "calibration", 300, testutil::gaussian(300 * 12, rng));
  const FeatureMatrix q(layer, "test_id", 97, testutil::gaussian(97 * 12, rng));
  ScorerConfig cfg = ScorerConfig::defaults(ScorerMethod::knn);
  cfg.k = 10;
  const auto index = KnnIndex::build(cal, cfg);
  CHECK(score_layer(q, cfg, &index).values == score_layer_serial(q, cfg, &index).values);

  const FeatureMatrix logits(logits_layer(4), "test_id", 3, {1, 2, 3, 4, 0, 0, 0, 0, -5, 5, 1, 1});
  const auto e = ScorerConfig::defaults(ScorerMethod::energy);
  CHECK(score_layer(logits, e, nullptr).values == score_layer_serial(logits, e, nullptr).values);
}
