#include <doctest.h>

#include <random>

#include "mlod/detector.hpp"
#include "mlod/knn.hpp"
#include "test_util.hpp"

using namespace mlod;
using testutil::kind_of;

namespace {

// Layer 1: features, layer 2: logits over 3 classes.
FeaturePack mixed_pack(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FeaturePack pack;
  pack.manifest.num_classes = 3;
  pack.manifest.splits = {{"calibration", 200}, {"test_id", 40}, {"ood", 30}};
  pack.manifest.layers = {testutil::features_layer(1, 5), {"head", LayerKind::logits, 3, 2}};
  for (const auto& layer : pack.manifest.layers)
    for (const auto& [split, n] : pack.manifest.splits)
      pack.matrices.emplace_back(layer, split, n, testutil::gaussian(n * layer.dim, rng));
  return pack;
}

std::vector<ScorerConfig> mixed_scorers(std::size_t k = 10) {
  auto knn = ScorerConfig::defaults(ScorerMethod::knn);
  knn.k = k;
  return {knn, ScorerConfig::defaults(ScorerMethod::energy)};
}

}  // namespace

TEST_CASE("calibration split is partitioned for k-NN layers only") {
  const auto pack = mixed_pack(61);
  const auto det = Detector::fit(pack, mixed_scorers());
  CHECK(det.layers() == 2);
  CHECK(det.table(0).size() == 100);
  CHECK(det.table(1).size() == 200);

  // the k-NN table holds the second half scored against an index of the first half
  const auto& cal = pack.at(1, "calibration");
  const auto index = KnnIndex::build(cal.slice_rows(0, 100), mixed_scorers()[0]);
  auto expect = index.score_batch(cal.slice_rows(100, 100), 10);
  std::sort(expect.begin(), expect.end());
  CHECK(std::equal(expect.begin(), expect.end(), det.table(0).sorted_scores().begin()));

  DetectorOptions opts;
  opts.reference_fraction = 0.8;
  CHECK(Detector::fit(pack, mixed_scorers(), opts).table(0).size() == 40);
}

TEST_CASE("split and single-sample paths agree") {
  const auto pack = mixed_pack(62);
  const auto det = Detector::fit(pack, mixed_scorers());
  const auto p = det.p_values(pack, "ood");
  CHECK(p.rows() == 30);
  CHECK(p.layers() == 2);
  for (std::size_t i = 0; i < 30; i += 7) {
    std::vector<std::vector<double>> rows;
    for (int l = 1; l <= 2; ++l) {
      const auto r = pack.at(l, "ood").row(i);
      rows.emplace_back(r.begin(), r.end());
    }
    const auto single = det.sample_p_values(rows);
    CHECK(single[0] == p(i, 0));
    CHECK(single[1] == p(i, 1));
  }
}

TEST_CASE("persisted tables reproduce the fitted detector") {
  const auto pack = mixed_pack(63);
  const auto det = Detector::fit(pack, mixed_scorers());
  const std::vector<CalibrationTable> tables(det.tables().begin(), det.tables().end());
  const auto again = Detector::with_tables(pack, mixed_scorers(), tables);
  CHECK(again.p_values(pack, "test_id") == det.p_values(pack, "test_id"));
  CHECK(kind_of([&] { Detector::with_tables(pack, mixed_scorers(), {tables[0]}); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("detector configuration errors") {
  const auto pack = mixed_pack(64);
  CHECK(kind_of([&] { Detector::fit(pack, {mixed_scorers()[0]}); }) == ErrorKind::ConfigError);
  auto swapped = mixed_scorers();
  std::swap(swapped[0], swapped[1]);
  CHECK(kind_of([&] { Detector::fit(pack, swapped); }) == ErrorKind::KindMismatch);
  CHECK(kind_of([&] { Detector::fit(pack, mixed_scorers(150)); }) == ErrorKind::TooFewPoints);
  DetectorOptions opts;
  opts.reference_fraction = 0.95;
  CHECK(kind_of([&] { Detector::fit(pack, mixed_scorers(), opts); }) == ErrorKind::TooFewSamples);
  opts.reference_fraction = 1.0;
  CHECK(kind_of([&] { Detector::fit(pack, mixed_scorers(), opts); }) == ErrorKind::ConfigError);

  const auto det = Detector::fit(pack, mixed_scorers());
  std::vector<std::vector<double>> rows{{1, 2, 3, 4, 5}};
  CHECK(kind_of([&] { det.sample_scores(rows); }) == ErrorKind::ShapeMismatch);
  rows.push_back({1, 2});
  CHECK(kind_of([&] { det.sample_scores(rows); }) == ErrorKind::ShapeMismatch);
}
