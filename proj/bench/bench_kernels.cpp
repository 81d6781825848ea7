// Parallel kernels against their serial references.

#include <benchmark/benchmark.h>

#include <random>

#include "mlod/calibrator.hpp"
#include "mlod/combiner.hpp"
#include "mlod/knn.hpp"

namespace {

using namespace mlod;

struct KnnFixture {
  KnnIndex index;
  std::vector<float> queries;

  static const KnnFixture& get() {
    static const KnnFixture f = make();
    return f;
  }

 private:
  static KnnFixture make() {
    const std::size_t n = 20000, d = 64, q = 512;
    std::mt19937_64 rng(1);
    std::normal_distribution<float> nd;
    std::vector<float> cal(n * d), queries(q * d);
    for (auto& x : cal) x = nd(rng);
    for (auto& x : queries) x = nd(rng);
    ScorerConfig cfg = ScorerConfig::defaults(ScorerMethod::knn);
    return {KnnIndex::build(FeatureMatrix({"layer1", LayerKind::features, d, 1}, "calibration", n, std::move(cal)), cfg),
            std::move(queries)};
  }
};

void BM_KnnBatch(benchmark::State& state) {
  const auto& f = KnnFixture::get();
  for (auto _ : state) benchmark::DoNotOptimize(f.index.score_batch(f.queries, 50));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.queries.size() / 64));
}
BENCHMARK(BM_KnnBatch)->Unit(benchmark::kMillisecond);

void BM_KnnBatchSerial(benchmark::State& state) {
  const auto& f = KnnFixture::get();
  for (auto _ : state) benchmark::DoNotOptimize(f.index.score_batch_serial(f.queries, 50));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.queries.size() / 64));
}
BENCHMARK(BM_KnnBatchSerial)->Unit(benchmark::kMillisecond);

PValueMatrix random_p(std::size_t rows, std::size_t m) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(1e-9, 1.0);
  PValueMatrix p(rows, m);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < m; ++j) p(i, j) = u(rng);
  return p;
}

void BM_DecideBatch(benchmark::State& state) {
  const auto p = random_p(200000, 12);
  const FusionRule rule({static_cast<CombinerMethod>(state.range(0)), 0.05, {}}, 12);
  for (auto _ : state) benchmark::DoNotOptimize(decide_batch(rule, p));
  state.SetItemsProcessed(state.iterations() * 200000);
  state.SetLabel(std::string(to_string(rule.config().method)));
}
BENCHMARK(BM_DecideBatch)->DenseRange(0, 6)->Unit(benchmark::kMillisecond);

void BM_DecideBatchSerial(benchmark::State& state) {
  const auto p = random_p(200000, 12);
  const FusionRule rule({static_cast<CombinerMethod>(state.range(0)), 0.05, {}}, 12);
  for (auto _ : state) benchmark::DoNotOptimize(decide_batch_serial(rule, p));
  state.SetItemsProcessed(state.iterations() * 200000);
  state.SetLabel(std::string(to_string(rule.config().method)));
}
BENCHMARK(BM_DecideBatchSerial)->DenseRange(0, 6)->Unit(benchmark::kMillisecond);

struct PFixture {
  std::vector<CalibrationTable> tables;
  std::vector<std::vector<double>> scores;
};

PFixture p_fixture() {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd;
  PFixture f;
  for (int l = 0; l < 4; ++l) {
    std::vector<double> cal(5000), s(100000);
    for (auto& x : cal) x = nd(rng);
    for (auto& x : s) x = nd(rng);
    f.tables.push_back(fit_calibration(cal));
    f.scores.push_back(std::move(s));
  }
  return f;
}

void BM_PMatrix(benchmark::State& state) {
  const auto f = p_fixture();
  for (auto _ : state) benchmark::DoNotOptimize(p_matrix(f.tables, f.scores));
}
BENCHMARK(BM_PMatrix)->Unit(benchmark::kMillisecond);

void BM_PMatrixSerial(benchmark::State& state) {
  const auto f = p_fixture();
  for (auto _ : state) benchmark::DoNotOptimize(p_matrix_serial(f.tables, f.scores));
}
BENCHMARK(BM_PMatrixSerial)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
