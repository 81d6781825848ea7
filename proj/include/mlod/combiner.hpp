#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mlod/calibrator.hpp"

namespace mlod {

enum class CombinerMethod { bh, adabh, by, fisher, cauchy, naive_and, last_layer };

inline constexpr CombinerMethod kAllCombiners[] = {
    CombinerMethod::bh,     CombinerMethod::adabh,     CombinerMethod::by,        CombinerMethod::fisher,
    CombinerMethod::cauchy, CombinerMethod::naive_and, CombinerMethod::last_layer};

std::string_view to_string(CombinerMethod method) noexcept;
std::string_view display_name(CombinerMethod method) noexcept;
CombinerMethod combiner_method_from_string(std::string_view text);

/// True for methods whose decision is a threshold on combined_score.
bool has_combined_score(CombinerMethod method) noexcept;

struct CombinerConfig {
  CombinerMethod method = CombinerMethod::fisher;
  double alpha = 0.05;
  std::vector<double> weights;  // cauchy only; empty means uniform 1/m
};

struct DetectionResult {
  Decision decision = Decision::id;
  /// Fisher F, Cauchy T, min p (naive_and), p_m (last_layer), or the smallest
  /// level at which the step-up procedure rejects (bh, adabh, by).
  double statistic = 0.0;
  /// 1-based layer positions. For fisher and cauchy these are Bonferroni
  /// flags (p_i < alpha/m), reported as diagnostics only.
  std::vector<int> rejected_layers;
  std::optional<int> m0_hat;  // adabh, when the slope stage ran
};

/// A combiner bound to a method, a level and a layer count, with its critical
/// values precomputed. Immutable and safe to share between threads.
class FusionRule {
 public:
  FusionRule(CombinerConfig config, std::size_t layers);

  const CombinerConfig& config() const noexcept { return config_; }
  std::size_t layers() const noexcept { return m_; }
  /// Fisher chi-square or Cauchy critical value; 0 for step-up rules.
  double critical_value() const noexcept { return critical_; }

  DetectionResult detect(std::span<const double> p) const;
  bool is_ood(std::span<const double> p) const;

  /// Continuous score, lower = more OOD. Throws UnsupportedMethod for adabh.
  double score(std::span<const double> p) const;

 private:
  void validate(std::span<const double> p) const;

  CombinerConfig config_;
  std::size_t m_;
  double critical_ = 0.0;
  double harmonic_ = 1.0;
  std::vector<double> weights_;
};

DetectionResult combine_bh(std::span<const double> p, double alpha);
DetectionResult combine_adabh(std::span<const double> p, double alpha);
DetectionResult combine_by(std::span<const double> p, double alpha);
DetectionResult combine_fisher(std::span<const double> p, double alpha);
DetectionResult combine_cauchy(std::span<const double> p, double alpha, std::span<const double> weights = {});
DetectionResult naive_and(std::span<const double> p, double alpha);
DetectionResult last_layer(std::span<const double> p, double alpha);

DetectionResult combine(std::span<const double> p, const CombinerConfig& config);
double combined_score(std::span<const double> p, const CombinerConfig& config);

/// Per-sample OOD flags (1 = OOD) over a p-value matrix; parallel over rows.
std::vector<std::uint8_t> decide_batch(const FusionRule& rule, const PValueMatrix& p);
std::vector<std::uint8_t> decide_batch_serial(const FusionRule& rule, const PValueMatrix& p);
std::vector<double> combined_scores(const FusionRule& rule, const PValueMatrix& p);

}  // namespace mlod
