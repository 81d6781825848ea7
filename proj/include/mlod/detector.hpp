#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mlod/calibrator.hpp"
#include "mlod/featurepack.hpp"
#include "mlod/knn.hpp"
#include "mlod/scorers.hpp"

namespace mlod {

struct DetectorOptions {
  /// Share of the calibration split used as the k-NN reference set; the rest
  /// is scored against it to fit the layer's calibration table. Logit layers
  /// use the whole split for their table.
  double reference_fraction = 0.5;
  std::size_t min_calibration = kMinCalibrationSamples;
};

/// Fitted per-layer scorers and calibration tables for one pack: turns any
/// split (or a single sample) into layer-wise p-values.
class Detector {
 public:
  /// `scorers[i]` is applied to the layer with index i + 1.
  static Detector fit(const FeaturePack& pack, std::vector<ScorerConfig> scorers, DetectorOptions options = {});

  /// Rebuilds the k-NN reference sets from the pack but takes calibration
  /// tables from disk instead of refitting them.
  static Detector with_tables(const FeaturePack& pack, std::vector<ScorerConfig> scorers,
                              std::vector<CalibrationTable> tables, DetectorOptions options = {});

  std::size_t layers() const noexcept { return layers_.size(); }
  const LayerSpec& layer(std::size_t i) const { return layers_.at(i); }
  const ScorerConfig& scorer(std::size_t i) const { return scorers_.at(i); }
  const CalibrationTable& table(std::size_t i) const { return tables_.at(i); }
  std::span<const CalibrationTable> tables() const noexcept { return tables_; }

  std::vector<double> score(std::size_t i, const FeatureMatrix& matrix) const;
  /// Per-layer score vectors of one split.
  std::vector<std::vector<double>> score_split(const FeaturePack& pack, std::string_view split) const;
  PValueMatrix p_values(const FeaturePack& pack, std::string_view split) const;

  /// One sample given as one feature row per layer.
  std::vector<double> sample_scores(std::span<const std::vector<double>> rows) const;
  std::vector<double> sample_p_values(std::span<const std::vector<double>> rows) const;

 private:
  Detector() = default;
  void build_indices(const FeaturePack& pack, const DetectorOptions& options);

  std::vector<LayerSpec> layers_;
  std::vector<ScorerConfig> scorers_;
  std::vector<std::optional<KnnIndex>> indices_;
  std::vector<CalibrationTable> tables_;
  std::vector<std::optional<FeatureMatrix>> holdout_;  // calibration rows scored for the table
};

}  // namespace mlod
