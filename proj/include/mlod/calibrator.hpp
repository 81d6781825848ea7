#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "mlod/scorers.hpp"

namespace mlod {

inline constexpr std::size_t kMinCalibrationSamples = 20;
inline constexpr std::size_t kRecommendedCalibrationSamples = 1000;

enum class Decision { id, ood };

std::string_view to_string(Decision d) noexcept;

/// Empirical score distribution of one (layer, scorer) pair on held-out ID
/// data. Scores are kept sorted ascending.
class CalibrationTable {
 public:
  CalibrationTable() = default;

  std::span<const double> sorted_scores() const noexcept { return sorted_; }
  std::size_t size() const noexcept { return sorted_.size(); }

  /// p-value resolution is 1/(n+2); below kRecommendedCalibrationSamples the
  /// CLI prints a warning.
  bool low_resolution() const noexcept { return sorted_.size() < kRecommendedCalibrationSamples; }

  /// #{calibration scores <= score}
  std::size_t count_at_or_below(double score) const;

  friend CalibrationTable fit_calibration(std::span<const double>, std::size_t);
  friend CalibrationTable load_table(const std::filesystem::path&);

 private:
  std::vector<double> sorted_;
};

/// Sorted copy of `scores`. Throws TooFewSamples below `min_samples` and
/// NaNInData on non-finite input.
CalibrationTable fit_calibration(std::span<const double> scores, std::size_t min_samples = kMinCalibrationSamples);
CalibrationTable fit_calibration(const ScoreVector& scores, std::size_t min_samples = kMinCalibrationSamples);

/// inf{ s : F(s) >= alpha } over the calibration scores, F the empirical CDF.
double threshold_at(const CalibrationTable& table, double alpha);

/// OOD iff score < lambda.
Decision decide_threshold(double score, double lambda);

/// (c + 1) / (n + 2) with c = #{calibration scores <= score}.
double p_value(const CalibrationTable& table, double score);

/// Row-major (samples x layers) p-values; row t is the p-vector of sample t
/// in layer order.
class PValueMatrix {
 public:
  PValueMatrix() = default;
  PValueMatrix(std::size_t rows, std::size_t layers) : rows_(rows), layers_(layers), values_(rows * layers) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t layers() const noexcept { return layers_; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(values_).subspan(i * layers_, layers_);
  }
  std::span<double> row(std::size_t i) { return std::span<double>(values_).subspan(i * layers_, layers_); }
  double& operator()(std::size_t i, std::size_t j) { return values_[i * layers_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * layers_ + j]; }
  std::span<const double> values() const noexcept { return values_; }

  bool operator==(const PValueMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t layers_ = 0;
  std::vector<double> values_;
};

/// One table and one score vector per layer, all score vectors of equal
/// length. Parallel over samples.
PValueMatrix p_matrix(std::span<const CalibrationTable> tables, std::span<const std::vector<double>> scores);
PValueMatrix p_matrix_serial(std::span<const CalibrationTable> tables, std::span<const std::vector<double>> scores);

/// Persisted table: sorted f64 little-endian values, no header.
std::string table_file_name(int layer_index, ScorerMethod scorer);
void save_table(const CalibrationTable& table, const std::filesystem::path& file);
CalibrationTable load_table(const std::filesystem::path& file);

}  // namespace mlod
