#include "mlod/run_config.hpp"

#include <fstream>

#include "mlod/error.hpp"

namespace mlod {

namespace fs = std::filesystem;
using nlohmann::json;

ScorerConfig scorer_from_json(const json& j) {
  if (j.is_string()) return ScorerConfig::defaults(scorer_method_from_string(j.get<std::string>()));
  ScorerConfig c = ScorerConfig::defaults(scorer_method_from_string(j.at("method").get<std::string>()));
  if (j.contains("k")) {
    const auto k = j["k"].get<long long>();
    if (k < 1) throw Error(ErrorKind::ConfigError, "k must be >= 1");
    c.k = static_cast<std::size_t>(k);
  }
  if (j.contains("temperature")) c.temperature = j["temperature"].get<double>();
  if (j.contains("normalize")) c.normalize = j["normalize"].get<bool>();
  c.validate();
  return c;
}

json scorer_to_json(const ScorerConfig& c) {
  json j{{"method", to_string(c.method)}};
  if (c.method == ScorerMethod::knn) {
    j["k"] = c.k;
    j["normalize"] = c.normalize;
  } else {
    j["temperature"] = c.temperature;
  }
  return j;
}

std::vector<ScorerConfig> RunConfig::scorers_for(const PackManifest& manifest) const {
  for (const auto& [key, cfg] : layer_scorers) {
    bool found = false;
    for (const auto& l : manifest.layers) found = found || key == l.name || key == std::to_string(l.index);
    if (!found) throw Error(ErrorKind::ConfigError, "scorer override for unknown layer '" + key + "'");
  }
  std::vector<ScorerConfig> out;
  for (const auto& l : manifest.layers) {
    ScorerConfig c = l.kind == LayerKind::features ? features_scorer : logits_scorer;
    if (auto it = layer_scorers.find(std::to_string(l.index)); it != layer_scorers.end()) c = it->second;
    else if (auto byname = layer_scorers.find(l.name); byname != layer_scorers.end()) c = byname->second;
    out.push_back(c);
  }
  return out;
}

void RunConfig::set_alpha(double value) {
  alpha = value;
  for (auto& m : methods) m.alpha = value;
}

void RunConfig::set_k(std::size_t k) {
  auto apply = [k](ScorerConfig& c) {
    if (c.method == ScorerMethod::knn) c.k = k;
  };
  apply(features_scorer);
  apply(logits_scorer);
  for (auto& [key, c] : layer_scorers) apply(c);
}

void RunConfig::set_temperature(double t) {
  auto apply = [t](ScorerConfig& c) {
    if (c.method != ScorerMethod::knn) c.temperature = t;
  };
  apply(features_scorer);
  apply(logits_scorer);
  for (auto& [key, c] : layer_scorers) apply(c);
}

json RunConfig::to_json() const {
  json j;
  j["pack"] = pack_path.string();
  j["scorers"]["features"] = scorer_to_json(features_scorer);
  j["scorers"]["logits"] = scorer_to_json(logits_scorer);
  j["scorers"]["layers"] = json::object();
  for (const auto& [key, c] : layer_scorers) j["scorers"]["layers"][key] = scorer_to_json(c);
  j["methods"] = json::array();
  for (const auto& m : methods) {
    json entry{{"method", to_string(m.method)}, {"alpha", m.alpha}};
    if (!m.weights.empty()) entry["weights"] = m.weights;
    j["methods"].push_back(entry);
  }
  j["alpha"] = alpha;
  j["target_tpr"] = target_tpr;
  j["reference_fraction"] = reference_fraction;
  j["grid_size"] = grid_size;
  if (!output.empty()) j["output"] = output.string();
  if (!csv.empty()) j["csv"] = csv.string();
  j["seed"] = seed;
  return j;
}

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  RunConfig rc;
  auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  try {
    if (!j.is_object()) throw Error(ErrorKind::ConfigError, "run config must be a JSON object");
    rc.pack_path = resolve(j.at("pack").get<std::string>());
    if (j.contains("alpha")) rc.alpha = j["alpha"].get<double>();
    if (!(rc.alpha > 0.0 && rc.alpha < 1.0)) throw Error(ErrorKind::ConfigError, "alpha must lie in (0, 1)");
    if (j.contains("target_tpr")) rc.target_tpr = j["target_tpr"].get<double>();
    if (!(rc.target_tpr > 0.0 && rc.target_tpr <= 1.0))
      throw Error(ErrorKind::ConfigError, "target_tpr must lie in (0, 1]");
    if (j.contains("reference_fraction")) rc.reference_fraction = j["reference_fraction"].get<double>();
    if (j.contains("grid_size")) rc.grid_size = j["grid_size"].get<std::size_t>();
    if (rc.grid_size < 2) throw Error(ErrorKind::ConfigError, "grid_size must be >= 2");
    if (j.contains("output")) rc.output = resolve(j["output"].get<std::string>());
    if (j.contains("csv")) rc.csv = resolve(j["csv"].get<std::string>());
    if (j.contains("seed")) rc.seed = j["seed"].get<std::uint64_t>();

    if (j.contains("scorers")) {
      const json& s = j["scorers"];
      if (s.contains("features")) rc.features_scorer = scorer_from_json(s["features"]);
      if (s.contains("logits")) rc.logits_scorer = scorer_from_json(s["logits"]);
      if (s.contains("layers"))
        for (const auto& [key, value] : s["layers"].items()) rc.layer_scorers[key] = scorer_from_json(value);
    }
    if (rc.features_scorer.method != ScorerMethod::knn)
      throw Error(ErrorKind::ConfigError, "feature layers can only use the knn scorer");
    if (rc.logits_scorer.method == ScorerMethod::knn)
      throw Error(ErrorKind::ConfigError, "logit layers need msp, energy or odin");

    if (j.contains("methods")) {
      for (const auto& m : j["methods"]) {
        CombinerConfig c;
        c.alpha = rc.alpha;
        if (m.is_string()) {
          c.method = combiner_method_from_string(m.get<std::string>());
        } else {
          c.method = combiner_method_from_string(m.at("method").get<std::string>());
          if (m.contains("alpha")) c.alpha = m["alpha"].get<double>();
          if (m.contains("weights")) c.weights = m["weights"].get<std::vector<double>>();
        }
        rc.methods.push_back(std::move(c));
      }
      if (rc.methods.empty()) throw Error(ErrorKind::ConfigError, "methods list is empty");
    } else {
      for (CombinerMethod m : kAllCombiners) rc.methods.push_back({m, rc.alpha, {}});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("malformed run config: ") + e.what());
  }
  return rc;
}

RunConfig load_run_config(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorKind::ConfigError, "cannot open config " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ConfigError, std::string("config is not valid JSON: ") + e.what());
  }
  return parse_run_config(j, file.parent_path());
}

}  // namespace mlod
