#include "mlod/detector.hpp"

#include <cmath>

#include "mlod/error.hpp"

namespace mlod {

void Detector::build_indices(const FeaturePack& pack, const DetectorOptions& options) {
  if (scorers_.size() != pack.manifest.layer_count())
    throw Error(ErrorKind::ConfigError, std::to_string(scorers_.size()) + " scorer configs for " +
                                            std::to_string(pack.manifest.layer_count()) + " layers");
  if (!(options.reference_fraction > 0.0 && options.reference_fraction < 1.0))
    throw Error(ErrorKind::ConfigError, "reference_fraction must lie in (0, 1)");

  layers_ = pack.manifest.layers;
  indices_.assign(layers_.size(), std::nullopt);
  holdout_.assign(layers_.size(), std::nullopt);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const ScorerConfig& config = scorers_[i];
    config.validate();
    if (!config.compatible_with(layers_[i].kind))
      throw Error(ErrorKind::KindMismatch, "layer " + std::to_string(layers_[i].index) + " is " +
                                               std::string(to_string(layers_[i].kind)) + ", scorer " +
                                               std::string(to_string(config.method)) + " does not apply");
    const FeatureMatrix& cal = pack.at(layers_[i].index, kCalibrationSplit);
    if (config.method != ScorerMethod::knn) {
      holdout_[i] = cal;
      continue;
    }
    const auto n = cal.rows();
    const auto n_ref = static_cast<std::size_t>(std::llround(options.reference_fraction * static_cast<double>(n)));
    if (n_ref < config.k)
      throw Error(ErrorKind::TooFewPoints, "layer " + std::to_string(layers_[i].index) + ": reference set of " +
                                               std::to_string(n_ref) + " points is smaller than k=" +
                                               std::to_string(config.k));
    if (n - n_ref < options.min_calibration)
      throw Error(ErrorKind::TooFewSamples, "layer " + std::to_string(layers_[i].index) + ": only " +
                                                std::to_string(n - n_ref) + " calibration rows left for the table");
    indices_[i] = KnnIndex::build(cal.slice_rows(0, n_ref), config);
    holdout_[i] = cal.slice_rows(n_ref, n - n_ref);
  }
}

Detector Detector::fit(const FeaturePack& pack, std::vector<ScorerConfig> scorers, DetectorOptions options) {
  Detector d;
  d.scorers_ = std::move(scorers);
  d.build_indices(pack, options);
  for (std::size_t i = 0; i < d.layers_.size(); ++i)
    d.tables_.push_back(fit_calibration(d.score(i, *d.holdout_[i]), options.min_calibration));
  return d;
}

Detector Detector::with_tables(const FeaturePack& pack, std::vector<ScorerConfig> scorers,
                               std::vector<CalibrationTable> tables, DetectorOptions options) {
  Detector d;
  d.scorers_ = std::move(scorers);
  d.build_indices(pack, options);
  if (tables.size() != d.layers_.size())
    throw Error(ErrorKind::ShapeMismatch, std::to_string(tables.size()) + " tables for " +
                                              std::to_string(d.layers_.size()) + " layers");
  d.tables_ = std::move(tables);
  return d;
}

std::vector<double> Detector::score(std::size_t i, const FeatureMatrix& matrix) const {
  const KnnIndex* index = indices_.at(i) ? &*indices_[i] : nullptr;
  return score_layer(matrix, scorers_[i], index).values;
}

std::vector<std::vector<double>> Detector::score_split(const FeaturePack& pack, std::string_view split) const {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) out.push_back(score(i, pack.at(layers_[i].index, split)));
  return out;
}

PValueMatrix Detector::p_values(const FeaturePack& pack, std::string_view split) const {
  const auto scores = score_split(pack, split);
  return p_matrix(tables_, scores);
}

std::vector<double> Detector::sample_scores(std::span<const std::vector<double>> rows) const {
  if (rows.size() != layers_.size())
    throw Error(ErrorKind::ShapeMismatch, std::to_string(rows.size()) + " feature rows for " +
                                              std::to_string(layers_.size()) + " layers");
  std::vector<double> out(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (rows[i].size() != layers_[i].dim)
      throw Error(ErrorKind::ShapeMismatch, "layer " + std::to_string(layers_[i].index) + " expects dim " +
                                                std::to_string(layers_[i].dim) + ", got " +
                                                std::to_string(rows[i].size()));
    out[i] = indices_[i] ? indices_[i]->score(rows[i], scorers_[i].k) : logit_score(rows[i], scorers_[i]);
  }
  return out;
}

std::vector<double> Detector::sample_p_values(std::span<const std::vector<double>> rows) const {
  auto scores = sample_scores(rows);
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = p_value(tables_[i], scores[i]);
  return scores;
}

}  // namespace mlod
