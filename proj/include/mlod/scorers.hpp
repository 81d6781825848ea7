#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "mlod/featurepack.hpp"

namespace mlod {

class KnnIndex;

enum class ScorerMethod { msp, energy, odin, knn };

std::string_view to_string(ScorerMethod method) noexcept;
ScorerMethod scorer_method_from_string(std::string_view text);

struct ScorerConfig {
  ScorerMethod method = ScorerMethod::knn;
  double temperature = 1.0;
  std::size_t k = 50;
  bool normalize = true;

  /// Defaults per method: T=1 for energy and msp, T=1000 for odin, k=50.
  static ScorerConfig defaults(ScorerMethod method);
  /// Throws ConfigError on T <= 0 or k == 0.
  void validate() const;
  bool compatible_with(LayerKind kind) const noexcept;
};

/// One score per row of a split. Higher means more in-distribution for every
/// scorer.
struct ScoreVector {
  std::vector<double> values;
  LayerSpec layer;
  ScorerConfig scorer;
};

double msp_score(std::span<const double> logits);

/// T * logsumexp(logits / T), the negated free energy.
double energy_score(std::span<const double> logits, double temperature);

/// Temperature-scaled maximum softmax probability (no input perturbation).
double odin_score(std::span<const double> logits, double temperature);

/// Applies a logit scorer to one row.
double logit_score(std::span<const double> logits, const ScorerConfig& config);

/// Scores every row of `matrix`. For knn the index is built from
/// `calibration`; logit scorers ignore it.
ScoreVector score_layer(const FeatureMatrix& matrix, const ScorerConfig& config, const FeatureMatrix& calibration);

/// Same as above with a prebuilt index (required for knn, ignored otherwise).
ScoreVector score_layer(const FeatureMatrix& matrix, const ScorerConfig& config, const KnnIndex* index);

/// Serial reference for score_layer; identical output, no threading.
ScoreVector score_layer_serial(const FeatureMatrix& matrix, const ScorerConfig& config, const KnnIndex* index);

}  // namespace mlod
