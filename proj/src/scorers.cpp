#include "mlod/scorers.hpp"

#include <algorithm>
#include <cmath>

#include "mlod/error.hpp"
#include "mlod/knn.hpp"

namespace mlod {

namespace {

void check_logits(std::span<const double> logits, std::size_t min_classes) {
  if (logits.size() < min_classes)
    throw Error(ErrorKind::DegenerateLogits, "need at least " + std::to_string(min_classes) + " logits, got " +
                                                 std::to_string(logits.size()));
  for (double v : logits)
    if (!std::isfinite(v)) throw Error(ErrorKind::DegenerateLogits, "non-finite logit");
}

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw Error(ErrorKind::OutOfDomain, "temperature must be positive and finite");
}

// sum_c exp((l_c - max) / T); the maximal term contributes exactly 1.
double shifted_partition(std::span<const double> logits, double temperature, double& max_out) {
  const double max = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp((v - max) / temperature);
  max_out = max;
  return sum;
}

void logits_to_double(std::span<const float> row, std::vector<double>& out) {
  out.assign(row.begin(), row.end());
}

}  // namespace

std::string_view to_string(ScorerMethod method) noexcept {
  switch (method) {
    case ScorerMethod::msp: return "msp";
    case ScorerMethod::energy: return "energy";
    case ScorerMethod::odin: return "odin";
    case ScorerMethod::knn: return "knn";
  }
  return "unknown";
}

ScorerMethod scorer_method_from_string(std::string_view text) {
  if (text == "msp") return ScorerMethod::msp;
  if (text == "energy") return ScorerMethod::energy;
  if (text == "odin") return ScorerMethod::odin;
  if (text == "knn") return ScorerMethod::knn;
  throw Error(ErrorKind::ConfigError, "unknown scorer '" + std::string(text) + "'");
}

ScorerConfig ScorerConfig::defaults(ScorerMethod method) {
  ScorerConfig c;
  c.method = method;
  c.temperature = method == ScorerMethod::odin ? 1000.0 : 1.0;
  return c;
}

void ScorerConfig::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw Error(ErrorKind::ConfigError, "temperature must be positive");
  if (k == 0) throw Error(ErrorKind::ConfigError, "k must be positive");
}

bool ScorerConfig::compatible_with(LayerKind kind) const noexcept {
  return method == ScorerMethod::knn ? kind == LayerKind::features : kind == LayerKind::logits;
}

double msp_score(std::span<const double> logits) {
  check_logits(logits, 2);
  double max;
  return 1.0 / shifted_partition(logits, 1.0, max);
}

double energy_score(std::span<const double> logits, double temperature) {
  check_logits(logits, 1);
  check_temperature(temperature);
  double max;
  const double sum = shifted_partition(logits, temperature, max);
  return max + temperature * std::log(sum);
}

double odin_score(std::span<const double> logits, double temperature) {
  check_logits(logits, 2);
  check_temperature(temperature);
  double max;
  return 1.0 / shifted_partition(logits, temperature, max);
}

double logit_score(std::span<const double> logits, const ScorerConfig& config) {
  switch (config.method) {
    case ScorerMethod::msp: return msp_score(logits);
    case ScorerMethod::energy: return energy_score(logits, config.temperature);
    case ScorerMethod::odin: return odin_score(logits, config.temperature);
    case ScorerMethod::knn: break;
  }
  throw Error(ErrorKind::KindMismatch, "knn is not a logit scorer");
}

ScoreVector score_layer(const FeatureMatrix& matrix, const ScorerConfig& config, const FeatureMatrix& calibration) {
  if (!config.compatible_with(matrix.layer().kind))
    throw Error(ErrorKind::KindMismatch, std::string(to_string(config.method)) + " cannot score a " +
                                             std::string(to_string(matrix.layer().kind)) + " layer");
  if (config.method != ScorerMethod::knn) return score_layer(matrix, config, nullptr);
  const KnnIndex index = KnnIndex::build(calibration, config);
  return score_layer(matrix, config, &index);
}

namespace {

ScoreVector score_layer_impl(const FeatureMatrix& matrix, const ScorerConfig& config, const KnnIndex* index,
                             bool parallel) {
  config.validate();
  if (!config.compatible_with(matrix.layer().kind))
    throw Error(ErrorKind::KindMismatch, std::string(to_string(config.method)) + " cannot score a " +
                                             std::string(to_string(matrix.layer().kind)) + " layer");
  ScoreVector out{{}, matrix.layer(), config};
  if (config.method == ScorerMethod::knn) {
    if (index == nullptr) throw Error(ErrorKind::ConfigError, "knn scoring needs an index");
    out.values = parallel ? index->score_batch(matrix, config.k) : index->score_batch_serial(matrix, config.k);
    return out;
  }

  const std::size_t n = matrix.rows();
  out.values.assign(n, 0.0);
  if (parallel) {
    // Exceptions may not escape an OpenMP region; validate up front instead.
    std::vector<double> row;
    for (std::size_t i = 0; i < n; ++i) {
      logits_to_double(matrix.row(i), row);
      check_logits(row, config.method == ScorerMethod::energy ? 1 : 2);
    }
    check_temperature(config.temperature);
#pragma omp parallel
    {
      std::vector<double> local;
#pragma omp for schedule(static)
      for (std::size_t i = 0; i < n; ++i) {
        logits_to_double(matrix.row(i), local);
        out.values[i] = logit_score(local, config);
      }
    }
  } else {
    std::vector<double> row;
    for (std::size_t i = 0; i < n; ++i) {
      logits_to_double(matrix.row(i), row);
      out.values[i] = logit_score(row, config);
    }
  }
  return out;
}

}  // namespace

ScoreVector score_layer(const FeatureMatrix& matrix, const ScorerConfig& config, const KnnIndex* index) {
  return score_layer_impl(matrix, config, index, true);
}

ScoreVector score_layer_serial(const FeatureMatrix& matrix, const ScorerConfig& config, const KnnIndex* index) {
  return score_layer_impl(matrix, config, index, false);
}

}  // namespace mlod
