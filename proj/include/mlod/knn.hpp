#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mlod/featurepack.hpp"
#include "mlod/scorers.hpp"

namespace mlod {

/// Exact k-th nearest neighbour search over one layer's calibration features.
///
/// Points are stored in 64-bit precision, optionally divided by their
/// Euclidean norm, and packed into blocks of kLanes points laid out
/// dimension-major so the distance loop vectorizes across points. Every
/// squared distance is accumulated in ascending dimension order starting from
/// zero, so the blocked scan and the serial reference scan produce bitwise
/// identical distances.
class KnnIndex {
 public:
  static constexpr std::size_t kLanes = 16;

  static KnnIndex build(const FeatureMatrix& calibration, const ScorerConfig& config);

  std::size_t size() const noexcept { return count_; }
  std::size_t dim() const noexcept { return dim_; }
  bool normalized() const noexcept { return normalize_; }

  /// Stored (possibly normalized) coordinates of point i.
  std::vector<double> point(std::size_t i) const;

  /// Negative Euclidean distance from the (normalized) query to its k-th
  /// nearest stored point.
  double score(std::span<const double> query, std::size_t k) const;

  /// Scores every row; parallel over query tiles.
  std::vector<double> score_batch(const FeatureMatrix& queries, std::size_t k) const;
  std::vector<double> score_batch(std::span<const float> rows, std::size_t k) const;

  /// Unblocked single-threaded scan kept as the reference for score_batch.
  std::vector<double> score_batch_serial(const FeatureMatrix& queries, std::size_t k) const;
  std::vector<double> score_batch_serial(std::span<const float> rows, std::size_t k) const;

 private:
  KnnIndex() = default;

  void prepare_query(std::span<const double> in, double* out) const;
  void check_k(std::size_t k) const;
  void scan_tile(const double* queries, std::size_t count, std::size_t k, double* kth) const;
  double scan_reference(const double* query, std::size_t k, std::vector<double>& scratch) const;

  std::size_t count_ = 0;
  std::size_t dim_ = 0;
  bool normalize_ = true;
  std::vector<double> rows_;    // row-major copy, used by the reference scan
  std::vector<double> blocks_;  // [block][dim][lane]
};

double knn_score(const KnnIndex& index, std::span<const double> feature, std::size_t k);

/// Divides `v` by its Euclidean norm (sum of squares in index order, then
/// sqrt). Throws ZeroVector on a zero vector.
void l2_normalize(std::span<double> v);

}  // namespace mlod
