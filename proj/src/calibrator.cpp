#include "mlod/calibrator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mlod/error.hpp"

namespace mlod {

namespace {

void check_shape(std::span<const CalibrationTable> tables, std::span<const std::vector<double>> scores) {
  if (tables.empty()) throw Error(ErrorKind::ShapeMismatch, "no layers");
  if (tables.size() != scores.size())
    throw Error(ErrorKind::ShapeMismatch, std::to_string(tables.size()) + " tables but " +
                                              std::to_string(scores.size()) + " score vectors");
  for (const auto& s : scores)
    if (s.size() != scores.front().size())
      throw Error(ErrorKind::ShapeMismatch, "score vectors differ in sample count");
}

std::uint64_t byteswap64(std::uint64_t v) {
  std::uint64_t r = 0;
  for (int i = 0; i < 8; ++i) r = (r << 8) | ((v >> (8 * i)) & 0xffu);
  return r;
}

void to_from_le(std::vector<double>& values) {
  if constexpr (std::endian::native == std::endian::big) {
    for (double& v : values) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      bits = byteswap64(bits);
      std::memcpy(&v, &bits, sizeof bits);
    }
  }
}

}  // namespace

std::string_view to_string(Decision d) noexcept { return d == Decision::ood ? "OOD" : "ID"; }

std::size_t CalibrationTable::count_at_or_below(double score) const {
  return static_cast<std::size_t>(std::upper_bound(sorted_.begin(), sorted_.end(), score) - sorted_.begin());
}

CalibrationTable fit_calibration(std::span<const double> scores, std::size_t min_samples) {
  if (scores.size() < std::max<std::size_t>(min_samples, 1))
    throw Error(ErrorKind::TooFewSamples, std::to_string(scores.size()) + " calibration scores, need " +
                                              std::to_string(min_samples));
  for (double s : scores)
    if (!std::isfinite(s)) throw Error(ErrorKind::NaNInData, "non-finite calibration score");
  CalibrationTable table;
  table.sorted_.assign(scores.begin(), scores.end());
  std::sort(table.sorted_.begin(), table.sorted_.end());
  return table;
}

CalibrationTable fit_calibration(const ScoreVector& scores, std::size_t min_samples) {
  return fit_calibration(std::span<const double>(scores.values), min_samples);
}

double threshold_at(const CalibrationTable& table, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::OutOfDomain, "alpha must lie in (0, 1)");
  const auto sorted = table.sorted_scores();
  const std::size_t n = sorted.size();
  if (n == 0) throw Error(ErrorKind::TooFewSamples, "empty calibration table");
  // Smallest rank j (1-based) with j/n >= alpha; F(sorted[j-1]) >= j/n.
  auto reaches = [&](std::size_t j) { return static_cast<double>(j) / static_cast<double>(n) >= alpha; };
  std::size_t j = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(n)));
  j = std::clamp<std::size_t>(j, 1, n);
  while (j > 1 && reaches(j - 1)) --j;
  while (j < n && !reaches(j)) ++j;
  return sorted[j - 1];
}

Decision decide_threshold(double score, double lambda) { return score < lambda ? Decision::ood : Decision::id; }

double p_value(const CalibrationTable& table, double score) {
  const double n = static_cast<double>(table.size());
  return (static_cast<double>(table.count_at_or_below(score)) + 1.0) / (n + 2.0);
}

PValueMatrix p_matrix(std::span<const CalibrationTable> tables, std::span<const std::vector<double>> scores) {
  check_shape(tables, scores);
  const std::size_t m = tables.size();
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(scores.front().size());
  PValueMatrix out(static_cast<std::size_t>(n), m);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < n; ++t)
    for (std::size_t l = 0; l < m; ++l) out(static_cast<std::size_t>(t), l) = p_value(tables[l], scores[l][t]);
  return out;
}

PValueMatrix p_matrix_serial(std::span<const CalibrationTable> tables, std::span<const std::vector<double>> scores) {
  check_shape(tables, scores);
  const std::size_t m = tables.size(), n = scores.front().size();
  PValueMatrix out(n, m);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t l = 0; l < m; ++l) out(t, l) = p_value(tables[l], scores[l][t]);
  return out;
}

std::string table_file_name(int layer_index, ScorerMethod scorer) {
  return "calib_" + std::to_string(layer_index) + "_" + std::string(to_string(scorer)) + ".bin";
}

void save_table(const CalibrationTable& table, const std::filesystem::path& file) {
  std::vector<double> le(table.sorted_scores().begin(), table.sorted_scores().end());
  to_from_le(le);
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(le.data()), static_cast<std::streamsize>(le.size() * sizeof(double)));
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + file.string());
}

CalibrationTable load_table(const std::filesystem::path& file) {
  std::error_code ec;
  const auto bytes = std::filesystem::file_size(file, ec);
  if (ec) throw Error(ErrorKind::MissingFile, file.string());
  if (bytes % sizeof(double) != 0) throw Error(ErrorKind::SizeMismatch, file.string() + " is not a whole f64 array");
  std::vector<double> values(bytes / sizeof(double));
  std::ifstream in(file, std::ios::binary);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
  if (!in) throw Error(ErrorKind::IoFailure, "cannot read " + file.string());
  to_from_le(values);
  if (values.empty()) throw Error(ErrorKind::TooFewSamples, file.string() + " is empty");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw Error(ErrorKind::NaNInData, file.string() + " holds a non-finite score");
    if (i > 0 && values[i] < values[i - 1]) throw Error(ErrorKind::SchemaError, file.string() + " is not sorted");
  }
  CalibrationTable table;
  table.sorted_ = std::move(values);
  return table;
}

}  // namespace mlod
