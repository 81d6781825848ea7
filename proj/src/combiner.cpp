#include "mlod/combiner.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "mlod/error.hpp"
#include "mlod/statfn.hpp"

namespace mlod {

namespace {

struct Ordered {
  std::vector<double> p;          // ascending
  std::vector<std::size_t> layer; // original 0-based position of p[i]
};

Ordered order(std::span<const double> p) {
  Ordered o;
  o.layer.resize(p.size());
  std::iota(o.layer.begin(), o.layer.end(), std::size_t{0});
  std::stable_sort(o.layer.begin(), o.layer.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  o.p.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) o.p[i] = p[o.layer[i]];
  return o;
}

// Largest 1-based k with p_(k) <= alpha k / denom, or 0.
std::size_t step_up(std::span<const double> sorted, double alpha, double denom) {
  for (std::size_t k = sorted.size(); k >= 1; --k)
    if (sorted[k - 1] <= alpha * static_cast<double>(k) / denom) return k;
  return 0;
}

// min_k p_(k) denom / k, clipped to [0, 1]: the smallest rejecting level.
double adjusted_min_p(std::span<const double> sorted, double denom) {
  double best = 1.0;
  for (std::size_t k = 1; k <= sorted.size(); ++k)
    best = std::min(best, sorted[k - 1] * denom / static_cast<double>(k));
  return std::clamp(best, 0.0, 1.0);
}

// Adaptive estimate of the number of true nulls from the slopes
// S_i = (1 - p_(i)) / (m + 1 - i); m when the slopes never decrease.
int estimate_m0(std::span<const double> sorted) {
  const std::size_t m = sorted.size();
  double prev = (1.0 - sorted[0]) / static_cast<double>(m);
  for (std::size_t i = 2; i <= m; ++i) {
    const double s = (1.0 - sorted[i - 1]) / static_cast<double>(m + 1 - i);
    if (s < prev) {
      if (!(s > 0.0)) return static_cast<int>(m);
      const double est = std::floor(1.0 / s) + 1.0;
      return est >= static_cast<double>(m) ? static_cast<int>(m) : static_cast<int>(est);
    }
    prev = s;
  }
  return static_cast<int>(m);
}

bool stage_one_rejects(std::span<const double> sorted, double alpha) {
  const double m = static_cast<double>(sorted.size());
  for (std::size_t i = 1; i <= sorted.size(); ++i)
    if (sorted[i - 1] < alpha * static_cast<double>(i) / m) return true;
  return false;
}

std::vector<int> layers_at_or_below(std::span<const double> p, double cutoff) {
  std::vector<int> out;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] <= cutoff) out.push_back(static_cast<int>(i + 1));
  return out;
}

std::vector<int> layers_below(std::span<const double> p, double cutoff) {
  std::vector<int> out;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] < cutoff) out.push_back(static_cast<int>(i + 1));
  return out;
}

DetectionResult step_up_result(std::span<const double> p, const Ordered& o, double alpha, double denom) {
  DetectionResult r;
  r.statistic = adjusted_min_p(o.p, denom);
  const std::size_t k = step_up(o.p, alpha, denom);
  if (k > 0) {
    r.decision = Decision::ood;
    r.rejected_layers = layers_at_or_below(p, o.p[k - 1]);
  }
  return r;
}

}  // namespace

std::string_view to_string(CombinerMethod method) noexcept {
  switch (method) {
    case CombinerMethod::bh: return "bh";
    case CombinerMethod::adabh: return "adabh";
    case CombinerMethod::by: return "by";
    case CombinerMethod::fisher: return "fisher";
    case CombinerMethod::cauchy: return "cauchy";
    case CombinerMethod::naive_and: return "naive_and";
    case CombinerMethod::last_layer: return "last_layer";
  }
  return "unknown";
}

std::string_view display_name(CombinerMethod method) noexcept {
  switch (method) {
    case CombinerMethod::bh: return "MLOD-BH";
    case CombinerMethod::adabh: return "MLOD-adaBH";
    case CombinerMethod::by: return "MLOD-BY";
    case CombinerMethod::fisher: return "MLOD-Fisher";
    case CombinerMethod::cauchy: return "MLOD-Cauchy";
    case CombinerMethod::naive_and: return "Naive-AND";
    case CombinerMethod::last_layer: return "Layer@last";
  }
  return "unknown";
}

CombinerMethod combiner_method_from_string(std::string_view text) {
  for (CombinerMethod m : kAllCombiners)
    if (text == to_string(m)) return m;
  throw Error(ErrorKind::ConfigError, "unknown combiner '" + std::string(text) + "'");
}

bool has_combined_score(CombinerMethod method) noexcept { return method != CombinerMethod::adabh; }

FusionRule::FusionRule(CombinerConfig config, std::size_t layers) : config_(std::move(config)), m_(layers) {
  if (m_ == 0) throw Error(ErrorKind::EmptyPVector, "a combiner needs at least one layer");
  if (!(config_.alpha > 0.0 && config_.alpha < 1.0)) throw Error(ErrorKind::OutOfDomain, "alpha must lie in (0, 1)");
  const int m = static_cast<int>(m_);
  switch (config_.method) {
    case CombinerMethod::by: harmonic_ = statfn::harmonic(m); break;
    case CombinerMethod::fisher: critical_ = statfn::chi2_upper_quantile(config_.alpha, 2 * m); break;
    case CombinerMethod::cauchy: {
      critical_ = statfn::cauchy_upper_quantile(config_.alpha);
      if (config_.weights.empty()) {
        weights_.assign(m_, 1.0 / static_cast<double>(m_));
      } else {
        if (config_.weights.size() != m_)
          throw Error(ErrorKind::BadWeights, "expected " + std::to_string(m_) + " weights, got " +
                                                 std::to_string(config_.weights.size()));
        double sum = 0.0;
        for (double w : config_.weights) {
          if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorKind::BadWeights, "weights must be nonnegative");
          sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorKind::BadWeights, "weights must sum to 1");
        weights_ = config_.weights;
      }
      break;
    }
    default: break;
  }
}

void FusionRule::validate(std::span<const double> p) const {
  if (p.empty()) throw Error(ErrorKind::EmptyPVector, "empty p-value vector");
  if (p.size() != m_)
    throw Error(ErrorKind::ShapeMismatch, "p-vector has " + std::to_string(p.size()) + " entries, rule expects " +
                                              std::to_string(m_));
  const bool open = config_.method == CombinerMethod::fisher || config_.method == CombinerMethod::cauchy;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::InvalidPValue, "p-value outside [0, 1]");
    if (open && (v == 0.0 || v == 1.0))
      throw Error(ErrorKind::InvalidPValue, std::string(to_string(config_.method)) + " needs p-values in (0, 1)");
  }
}

DetectionResult FusionRule::detect(std::span<const double> p) const {
  validate(p);
  const double alpha = config_.alpha;
  const double m = static_cast<double>(m_);
  DetectionResult r;

  switch (config_.method) {
    case CombinerMethod::bh: return step_up_result(p, order(p), alpha, m);
    case CombinerMethod::by: return step_up_result(p, order(p), alpha, m * harmonic_);
    case CombinerMethod::adabh: {
      const Ordered o = order(p);
      if (!stage_one_rejects(o.p, alpha)) {
        r.statistic = adjusted_min_p(o.p, m);
        return r;
      }
      const int m0 = estimate_m0(o.p);
      r = step_up_result(p, o, alpha, static_cast<double>(m0));
      r.m0_hat = m0;
      return r;
    }
    case CombinerMethod::fisher: {
      double f = 0.0;
      for (double v : p) f += -2.0 * std::log(v);
      r.statistic = f;
      r.decision = f > critical_ ? Decision::ood : Decision::id;
      r.rejected_layers = layers_below(p, alpha / m);
      return r;
    }
    case CombinerMethod::cauchy: {
      double t = 0.0;
      for (std::size_t i = 0; i < m_; ++i) t += weights_[i] * std::tan((0.5 - p[i]) * std::numbers::pi);
      r.statistic = t;
      r.decision = t > critical_ ? Decision::ood : Decision::id;
      r.rejected_layers = layers_below(p, alpha / m);
      return r;
    }
    case CombinerMethod::naive_and: {
      r.statistic = *std::min_element(p.begin(), p.end());
      r.decision = r.statistic < alpha ? Decision::ood : Decision::id;
      r.rejected_layers = layers_below(p, alpha);
      return r;
    }
    case CombinerMethod::last_layer: {
      r.statistic = p.back();
      if (r.statistic < alpha) {
        r.decision = Decision::ood;
        r.rejected_layers = {static_cast<int>(m_)};
      }
      return r;
    }
  }
  return r;
}

bool FusionRule::is_ood(std::span<const double> p) const {
  const double alpha = config_.alpha;
  switch (config_.method) {
    case CombinerMethod::naive_and:
      validate(p);
      return *std::min_element(p.begin(), p.end()) < alpha;
    case CombinerMethod::last_layer:
      validate(p);
      return p.back() < alpha;
    case CombinerMethod::bh:
    case CombinerMethod::by:
    case CombinerMethod::adabh: {
      validate(p);
      thread_local std::vector<double> sorted;
      sorted.assign(p.begin(), p.end());
      std::sort(sorted.begin(), sorted.end());
      const double m = static_cast<double>(m_);
      if (config_.method == CombinerMethod::bh) return step_up(sorted, alpha, m) > 0;
      if (config_.method == CombinerMethod::by) return step_up(sorted, alpha, m * harmonic_) > 0;
      if (!stage_one_rejects(sorted, alpha)) return false;
      return step_up(sorted, alpha, static_cast<double>(estimate_m0(sorted))) > 0;
    }
    default: return detect(p).decision == Decision::ood;
  }
}

double FusionRule::score(std::span<const double> p) const {
  switch (config_.method) {
    case CombinerMethod::adabh:
      throw Error(ErrorKind::UnsupportedMethod, "adabh has no combined score; use the alpha sweep");
    case CombinerMethod::fisher:
    case CombinerMethod::cauchy: return -detect(p).statistic;
    default: return detect(p).statistic;
  }
}

DetectionResult combine_bh(std::span<const double> p, double alpha) {
  return FusionRule({CombinerMethod::bh, alpha, {}}, p.size()).detect(p);
}

DetectionResult combine_adabh(std::span<const double> p, double alpha) {
  return FusionRule({CombinerMethod::adabh, alpha, {}}, p.size()).detect(p);
}

DetectionResult combine_by(std::span<const double> p, double alpha) {
  return FusionRule({CombinerMethod::by, alpha, {}}, p.size()).detect(p);
}

DetectionResult combine_fisher(std::span<const double> p, double alpha) {
  return FusionRule({CombinerMethod::fisher, alpha, {}}, p.size()).detect(p);
}

DetectionResult combine_cauchy(std::span<const double> p, double alpha, std::span<const double> weights) {
  return FusionRule({CombinerMethod::cauchy, alpha, {weights.begin(), weights.end()}}, p.size()).detect(p);
}

DetectionResult naive_and(std::span<const double> p, double alpha) {
  return FusionRule({CombinerMethod::naive_and, alpha, {}}, p.size()).detect(p);
}

DetectionResult last_layer(std::span<const double> p, double alpha) {
  return FusionRule({CombinerMethod::last_layer, alpha, {}}, p.size()).detect(p);
}

DetectionResult combine(std::span<const double> p, const CombinerConfig& config) {
  return FusionRule(config, p.size()).detect(p);
}

double combined_score(std::span<const double> p, const CombinerConfig& config) {
  if (config.method == CombinerMethod::adabh)
    throw Error(ErrorKind::UnsupportedMethod, "adabh has no combined score; use the alpha sweep");
  return FusionRule(config, p.size()).score(p);
}

namespace {

void check_shape(const FusionRule& rule, const PValueMatrix& p) {
  if (p.layers() != rule.layers())
    throw Error(ErrorKind::ShapeMismatch, "p-value matrix has " + std::to_string(p.layers()) + " layers, rule expects " +
                                              std::to_string(rule.layers()));
}

}  // namespace

std::vector<std::uint8_t> decide_batch(const FusionRule& rule, const PValueMatrix& p) {
  check_shape(rule, p);
  std::vector<std::uint8_t> out(p.rows());
  std::vector<std::uint8_t> failed(p.rows(), 0);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(p.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = rule.is_ood(p.row(static_cast<std::size_t>(i))) ? 1 : 0;
    } catch (...) {
      failed[i] = 1;
    }
  }
  for (std::size_t i = 0; i < failed.size(); ++i)
    if (failed[i]) rule.is_ood(p.row(i));  // exceptions cannot leave the parallel region; rethrow here
  return out;
}

std::vector<std::uint8_t> decide_batch_serial(const FusionRule& rule, const PValueMatrix& p) {
  check_shape(rule, p);
  std::vector<std::uint8_t> out(p.rows());
  for (std::size_t i = 0; i < p.rows(); ++i) out[i] = rule.is_ood(p.row(i)) ? 1 : 0;
  return out;
}

std::vector<double> combined_scores(const FusionRule& rule, const PValueMatrix& p) {
  check_shape(rule, p);
  if (rule.config().method == CombinerMethod::adabh)
    throw Error(ErrorKind::UnsupportedMethod, "adabh has no combined score; use the alpha sweep");
  std::vector<double> out(p.rows());
  std::vector<std::uint8_t> failed(p.rows(), 0);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(p.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = rule.score(p.row(static_cast<std::size_t>(i)));
    } catch (...) {
      failed[i] = 1;
    }
  }
  for (std::size_t i = 0; i < failed.size(); ++i)
    if (failed[i]) rule.score(p.row(i));
  return out;
}

}  // namespace mlod
