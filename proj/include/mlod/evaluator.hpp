#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mlod/calibrator.hpp"
#include "mlod/combiner.hpp"
#include "mlod/detector.hpp"
#include "mlod/featurepack.hpp"
#include "mlod/scorers.hpp"

namespace mlod {

/// P(ID score > OOD score) + 1/2 P(tie), by rank sum with averaged tie ranks.
/// Higher scores mean more in-distribution.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

struct OperatingPoint {
  double threshold = 0.0;  // keep (call ID) when score >= threshold
  double tpr = 0.0;
  double fpr = 0.0;
};

/// Largest threshold keeping at least `target_tpr` of the ID scores, and the
/// share of OOD scores it keeps.
OperatingPoint operating_point(std::span<const double> id_scores, std::span<const double> ood_scores,
                               double target_tpr = 0.95);
double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores, double target_tpr = 0.95);

/// Share of rows the rule keeps as ID.
double kept_fraction(const FusionRule& rule, const PValueMatrix& p);

/// Largest alpha whose empirical TPR on `id_p` is at least `target_tpr`,
/// by bisection on [kMinSweepAlpha, 1). Deterministic.
double calibrate_alpha_for_tpr(const CombinerConfig& method, const PValueMatrix& id_p, double target_tpr);

struct RocCurve {
  double auroc = 0.0;
  std::vector<std::pair<double, double>> curve;  // (fpr, tpr), sorted
};

inline constexpr double kMinSweepAlpha = 1e-6;
inline constexpr double kMinCalibratedAlpha = 1e-12;

/// ROC traced by sweeping alpha over a log-spaced grid in
/// [1e-6, 1 - 1e-6]. `grid_size` counts the two fixed endpoints (0,0) and
/// (1,1), so grid_size = 2 yields the chance diagonal.
RocCurve roc_by_alpha_sweep(const CombinerConfig& method, const PValueMatrix& id_p, const PValueMatrix& ood_p,
                            std::size_t grid_size = 2001);

struct Metrics {
  double fpr95 = 0.0;
  double auroc = 0.0;
  double fpr_at_alpha = 0.0;
  double achieved_tpr = 0.0;
};

struct MethodReport {
  CombinerConfig config;
  double alpha_at_target = 0.0;  // alpha calibrated on the ID test split
  std::map<std::string, Metrics> datasets;
  Metrics average;
};

struct LayerReport {
  LayerSpec layer;
  ScorerConfig scorer;
  std::map<std::string, Metrics> datasets;
  Metrics average;
};

struct EvalOptions {
  double target_tpr = 0.95;
  std::size_t grid_size = 2001;
  bool per_layer_baseline = true;
  DetectorOptions detector;
};

struct EvalReport {
  std::vector<MethodReport> methods;
  std::vector<LayerReport> layers;
  std::vector<std::string> datasets;
  std::vector<std::string> warnings;
};

/// Scores, calibrates and fuses a pack, then measures every method on every
/// OOD split. `scorers[i]` applies to layer i + 1.
EvalReport evaluate(const FeaturePack& pack, std::span<const ScorerConfig> scorers,
                    std::span<const CombinerConfig> methods, const EvalOptions& options = {});

Metrics mean_metrics(const std::map<std::string, Metrics>& per_dataset);

nlohmann::json report_to_json(const EvalReport& report, const nlohmann::json& config_echo);
/// Methods x datasets table of FPR95 and AUROC in percent, plus the average.
std::string report_to_csv(const EvalReport& report);
std::string report_to_table(const EvalReport& report);

}  // namespace mlod
