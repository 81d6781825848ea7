#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlod/combiner.hpp"
#include "mlod/featurepack.hpp"
#include "mlod/scorers.hpp"

namespace mlod {

/// Evaluation run described by a JSON file:
///
///   {
///     "pack": "pack/",                      // relative to the config file
///     "scorers": {
///       "features": {"method": "knn", "k": 50, "normalize": true},
///       "logits":   {"method": "energy", "temperature": 1},
///       "layers":   {"3": {"method": "msp"}}  // by index or name
///     },
///     "methods": ["fisher", {"method": "cauchy", "weights": [0.5, 0.5]}],
///     "alpha": 0.05, "target_tpr": 0.95, "reference_fraction": 0.5,
///     "grid_size": 2001, "output": "report.json", "csv": "report.csv",
///     "seed": 0
///   }
struct RunConfig {
  std::filesystem::path pack_path;
  ScorerConfig features_scorer = ScorerConfig::defaults(ScorerMethod::knn);
  ScorerConfig logits_scorer = ScorerConfig::defaults(ScorerMethod::energy);
  std::map<std::string, ScorerConfig> layer_scorers;
  std::vector<CombinerConfig> methods;
  double alpha = 0.05;
  double target_tpr = 0.95;
  double reference_fraction = 0.5;
  std::size_t grid_size = 2001;
  std::filesystem::path output;
  std::filesystem::path csv;
  std::uint64_t seed = 0;

  /// One scorer per layer of `manifest`, in index order. Throws ConfigError
  /// when an override names a layer the pack does not have.
  std::vector<ScorerConfig> scorers_for(const PackManifest& manifest) const;

  /// Overrides every method's alpha.
  void set_alpha(double value);
  /// Overrides k on every knn scorer.
  void set_k(std::size_t k);
  /// Overrides the temperature on every logit scorer.
  void set_temperature(double t);

  nlohmann::json to_json() const;
};

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& file);

ScorerConfig scorer_from_json(const nlohmann::json& j);
nlohmann::json scorer_to_json(const ScorerConfig& c);

}  // namespace mlod
