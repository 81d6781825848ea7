#include "mlod/knn.hpp"

#include <algorithm>
#include <cmath>

#include "mlod/error.hpp"

namespace mlod {

namespace {

constexpr std::size_t kQueryTile = 32;
constexpr std::size_t kBlocksPerPanel = 32;  // 512 points per cache panel

// Fixed-capacity max-heap holding the k smallest distances seen so far.
class KSmallest {
 public:
  explicit KSmallest(std::size_t k) : k_(k) { heap_.reserve(k); }

  void reset() { heap_.clear(); }
  double bound() const noexcept { return heap_.size() < k_ ? INFINITY : heap_.front(); }

  void offer(double d) {
    if (heap_.size() < k_) {
      heap_.push_back(d);
      std::push_heap(heap_.begin(), heap_.end());
    } else if (d < heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.back() = d;
      std::push_heap(heap_.begin(), heap_.end());
    }
  }

  double kth() const noexcept { return heap_.front(); }

 private:
  std::size_t k_;
  std::vector<double> heap_;
};

}  // namespace

void l2_normalize(std::span<double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  const double norm = std::sqrt(sum);
  if (!(norm > 0.0)) throw Error(ErrorKind::ZeroVector, "cannot normalize a zero vector");
  for (double& x : v) x /= norm;
}

KnnIndex KnnIndex::build(const FeatureMatrix& calibration, const ScorerConfig& config) {
  config.validate();
  if (calibration.layer().kind != LayerKind::features)
    throw Error(ErrorKind::KindMismatch, "knn index needs a features layer");
  if (calibration.rows() < config.k)
    throw Error(ErrorKind::TooFewPoints, "k=" + std::to_string(config.k) + " exceeds " +
                                             std::to_string(calibration.rows()) + " calibration points");

  KnnIndex index;
  index.count_ = calibration.rows();
  index.dim_ = calibration.cols();
  index.normalize_ = config.normalize;
  index.rows_.assign(calibration.values().begin(), calibration.values().end());
  if (index.normalize_) {
    for (std::size_t i = 0; i < index.count_; ++i) {
      try {
        l2_normalize(std::span<double>(index.rows_).subspan(i * index.dim_, index.dim_));
      } catch (const Error&) {
        throw Error(ErrorKind::ZeroVector, "calibration row " + std::to_string(i) + " is zero");
      }
    }
  }

  const std::size_t blocks = (index.count_ + kLanes - 1) / kLanes;
  index.blocks_.assign(blocks * index.dim_ * kLanes, 0.0);
  for (std::size_t i = 0; i < index.count_; ++i) {
    const std::size_t b = i / kLanes, lane = i % kLanes;
    double* dst = index.blocks_.data() + b * index.dim_ * kLanes + lane;
    const double* src = index.rows_.data() + i * index.dim_;
    for (std::size_t j = 0; j < index.dim_; ++j) dst[j * kLanes] = src[j];
  }
  return index;
}

std::vector<double> KnnIndex::point(std::size_t i) const {
  return std::vector<double>(rows_.begin() + i * dim_, rows_.begin() + (i + 1) * dim_);
}

void KnnIndex::check_k(std::size_t k) const {
  if (k == 0 || k > count_)
    throw Error(ErrorKind::TooFewPoints, "k=" + std::to_string(k) + " not in 1.." + std::to_string(count_));
}

void KnnIndex::prepare_query(std::span<const double> in, double* out) const {
  if (in.size() != dim_)
    throw Error(ErrorKind::DimMismatch, "query dim " + std::to_string(in.size()) + " != index dim " +
                                            std::to_string(dim_));
  std::copy(in.begin(), in.end(), out);
  if (normalize_) l2_normalize(std::span<double>(out, dim_));
}

// Fills kth[q] with the k-th smallest squared distance for each of `count`
// prepared queries.
void KnnIndex::scan_tile(const double* queries, std::size_t count, std::size_t k, double* kth) const {
  const std::size_t blocks = blocks_.size() / (dim_ * kLanes);
  std::vector<KSmallest> best(count, KSmallest(k));
  alignas(64) double acc[kLanes];

  for (std::size_t panel = 0; panel < blocks; panel += kBlocksPerPanel) {
    const std::size_t panel_end = std::min(blocks, panel + kBlocksPerPanel);
    for (std::size_t q = 0; q < count; ++q) {
      const double* query = queries + q * dim_;
      KSmallest& heap = best[q];
      for (std::size_t b = panel; b < panel_end; ++b) {
        const double* block = blocks_.data() + b * dim_ * kLanes;
        for (std::size_t l = 0; l < kLanes; ++l) acc[l] = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) {
          const double qj = query[j];
          const double* col = block + j * kLanes;
#pragma omp simd
          for (std::size_t l = 0; l < kLanes; ++l) {
            const double diff = col[l] - qj;
            acc[l] += diff * diff;
          }
        }
        const std::size_t valid = std::min(kLanes, count_ - b * kLanes);
        const double bound = heap.bound();
        for (std::size_t l = 0; l < valid; ++l)
          if (acc[l] < bound) heap.offer(acc[l]);
      }
    }
  }
  for (std::size_t q = 0; q < count; ++q) kth[q] = best[q].kth();
}

double KnnIndex::scan_reference(const double* query, std::size_t k, std::vector<double>& scratch) const {
  scratch.resize(count_);
  for (std::size_t i = 0; i < count_; ++i) {
    const double* p = rows_.data() + i * dim_;
    double sum = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      const double diff = p[j] - query[j];
      sum += diff * diff;
    }
    scratch[i] = sum;
  }
  std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k - 1), scratch.end());
  return scratch[k - 1];
}

double KnnIndex::score(std::span<const double> query, std::size_t k) const {
  check_k(k);
  std::vector<double> q(dim_);
  prepare_query(query, q.data());
  double kth;
  scan_tile(q.data(), 1, k, &kth);
  return -std::sqrt(kth);
}

std::vector<double> KnnIndex::score_batch(const FeatureMatrix& queries, std::size_t k) const {
  return score_batch(queries.values(), k);
}

std::vector<double> KnnIndex::score_batch(std::span<const float> rows, std::size_t k) const {
  check_k(k);
  if (rows.size() % dim_ != 0) throw Error(ErrorKind::DimMismatch, "query buffer is not a multiple of dim");
  const std::size_t n = rows.size() / dim_;

  // Normalization may throw, so queries are prepared before the parallel region.
  std::vector<double> prepared(n * dim_);
  std::vector<double> tmp;
  for (std::size_t i = 0; i < n; ++i) {
    tmp.assign(rows.begin() + i * dim_, rows.begin() + (i + 1) * dim_);
    prepare_query(tmp, prepared.data() + i * dim_);
  }

  std::vector<double> out(n);
  const std::ptrdiff_t tiles = static_cast<std::ptrdiff_t>((n + kQueryTile - 1) / kQueryTile);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t t = 0; t < tiles; ++t) {
    const std::size_t first = static_cast<std::size_t>(t) * kQueryTile;
    const std::size_t count = std::min(kQueryTile, n - first);
    scan_tile(prepared.data() + first * dim_, count, k, out.data() + first);
  }
  for (double& v : out) v = -std::sqrt(v);
  return out;
}

std::vector<double> KnnIndex::score_batch_serial(const FeatureMatrix& queries, std::size_t k) const {
  return score_batch_serial(queries.values(), k);
}

std::vector<double> KnnIndex::score_batch_serial(std::span<const float> rows, std::size_t k) const {
  check_k(k);
  if (rows.size() % dim_ != 0) throw Error(ErrorKind::DimMismatch, "query buffer is not a multiple of dim");
  const std::size_t n = rows.size() / dim_;
  std::vector<double> out(n), query(dim_), tmp, scratch;
  for (std::size_t i = 0; i < n; ++i) {
    tmp.assign(rows.begin() + i * dim_, rows.begin() + (i + 1) * dim_);
    prepare_query(tmp, query.data());
    out[i] = -std::sqrt(scan_reference(query.data(), k, scratch));
  }
  return out;
}

double knn_score(const KnnIndex& index, std::span<const double> feature, std::size_t k) {
  return index.score(feature, k);
}

}  // namespace mlod
