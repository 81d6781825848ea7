#include "mlod/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "mlod/error.hpp"

namespace mlod::synth {

using nlohmann::json;

namespace {

// SplitMix64 finalizer.
std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Uniform in the open interval (0, 1) from the top 53 bits.
double open_unit(std::uint64_t bits) { return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53; }

constexpr std::uint64_t kSharedFactorLayer = 0;

}  // namespace

double counter_normal(std::uint64_t seed, std::uint64_t split, std::uint64_t sample, std::uint64_t layer,
                      std::uint64_t coord) {
  std::uint64_t h = mix(seed);
  h = mix(h ^ split);
  h = mix(h ^ sample);
  h = mix(h ^ ((layer << 32) | (coord & 0xffffffffull)));
  const double u1 = open_unit(mix(h ^ 1));
  const double u2 = open_unit(mix(h ^ 2));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void SynthSpec::validate() const {
  if (m == 0) throw Error(ErrorKind::InvalidSpec, "m must be >= 1");
  if (dims.size() != m) throw Error(ErrorKind::InvalidSpec, "dims must list one dimension per layer");
  for (auto d : dims)
    if (d == 0) throw Error(ErrorKind::InvalidSpec, "dims must be positive");
  if (n_cal == 0 || n_id == 0 || n_ood == 0) throw Error(ErrorKind::InvalidSpec, "sample counts must be >= 1");
  for (int l : shift_layers)
    if (l < 1 || l > static_cast<int>(m))
      throw Error(ErrorKind::InvalidSpec, "shift layer " + std::to_string(l) + " outside 1.." + std::to_string(m));
  if (!(shift_magnitude >= 0.0) || !std::isfinite(shift_magnitude))
    throw Error(ErrorKind::InvalidSpec, "shift_magnitude must be a nonnegative number");
  if (!(correlation >= 0.0 && correlation < 1.0)) throw Error(ErrorKind::InvalidSpec, "correlation must lie in [0, 1)");
  if (ood_name.empty() || ood_name == kCalibrationSplit || ood_name == kTestIdSplit)
    throw Error(ErrorKind::InvalidSpec, "invalid OOD split name '" + ood_name + "'");
}

SynthSpec scenario(std::string_view name) {
  SynthSpec spec;
  if (name == "null") {
  } else if (name == "early_shift") {
    spec.shift_layers = {1};
    spec.shift_magnitude = 4.0;
  } else if (name == "late_shift") {
    spec.shift_layers = {4};
    spec.shift_magnitude = 4.0;
  } else if (name == "all_shift") {
    spec.shift_layers = {1, 2, 3, 4};
    spec.shift_magnitude = 2.0;
  } else if (name == "correlated_early") {
    spec.shift_layers = {1};
    spec.shift_magnitude = 4.0;
    spec.correlation = 0.5;
  } else {
    throw Error(ErrorKind::UnknownScenario, "unknown scenario '" + std::string(name) + "'");
  }
  return spec;
}

SynthSpec spec_from_json(const json& j) {
  SynthSpec spec;
  try {
    if (j.contains("scenario")) spec = scenario(j["scenario"].get<std::string>());
    if (j.contains("m")) spec.m = j["m"].get<std::size_t>();
    if (j.contains("dims")) {
      if (j["dims"].is_number()) spec.dims.assign(spec.m, j["dims"].get<std::size_t>());
      else spec.dims = j["dims"].get<std::vector<std::size_t>>();
    } else if (spec.dims.size() != spec.m && !spec.dims.empty()) {
      spec.dims.assign(spec.m, spec.dims.front());
    }
    if (j.contains("n_cal")) spec.n_cal = j["n_cal"].get<std::size_t>();
    if (j.contains("n_id")) spec.n_id = j["n_id"].get<std::size_t>();
    if (j.contains("n_ood")) spec.n_ood = j["n_ood"].get<std::size_t>();
    if (j.contains("shift_layers")) spec.shift_layers = j["shift_layers"].get<std::vector<int>>();
    if (j.contains("shift_magnitude")) spec.shift_magnitude = j["shift_magnitude"].get<double>();
    if (j.contains("correlation")) spec.correlation = j["correlation"].get<double>();
    if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("ood_name")) spec.ood_name = j["ood_name"].get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidSpec, std::string("malformed synth spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

json spec_to_json(const SynthSpec& spec) {
  return {{"m", spec.m},
          {"dims", spec.dims},
          {"n_cal", spec.n_cal},
          {"n_id", spec.n_id},
          {"n_ood", spec.n_ood},
          {"shift_layers", spec.shift_layers},
          {"shift_magnitude", spec.shift_magnitude},
          {"correlation", spec.correlation},
          {"seed", spec.seed},
          {"ood_name", spec.ood_name}};
}

FeaturePack generate(const SynthSpec& spec) {
  spec.validate();
  FeaturePack pack;
  PackManifest& manifest = pack.manifest;
  for (std::size_t l = 0; l < spec.m; ++l)
    manifest.layers.push_back({"layer" + std::to_string(l + 1), LayerKind::features, spec.dims[l],
                               static_cast<int>(l + 1)});
  const std::vector<std::pair<std::string, std::size_t>> splits{
      {std::string(kCalibrationSplit), spec.n_cal}, {std::string(kTestIdSplit), spec.n_id}, {spec.ood_name, spec.n_ood}};
  for (const auto& [name, count] : splits) manifest.splits[name] = count;
  validate_manifest(manifest);

  const std::set<int> shifted(spec.shift_layers.begin(), spec.shift_layers.end());
  const double own = std::sqrt(1.0 - spec.correlation);
  const double shared = std::sqrt(spec.correlation);

  for (std::size_t tag = 0; tag < splits.size(); ++tag) {
    const auto& [name, count] = splits[tag];
    const bool is_ood = tag == 2;
    const std::uint64_t split_key = tag + 1;

    std::vector<double> factor(count);
    for (std::size_t s = 0; s < count; ++s) factor[s] = counter_normal(spec.seed, split_key, s, kSharedFactorLayer, 0);

    for (std::size_t l = 0; l < spec.m; ++l) {
      const std::size_t d = spec.dims[l];
      const bool shift_here = is_ood && shifted.count(static_cast<int>(l + 1)) > 0;
      std::vector<float> values(count * d);
      const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t s = 0; s < n; ++s) {
        const auto sample = static_cast<std::size_t>(s);
        for (std::size_t c = 0; c < d; ++c) {
          double v = own * counter_normal(spec.seed, split_key, sample, l + 1, c) + shared * factor[sample];
          if (shift_here && c == 0) v += spec.shift_magnitude;
          values[sample * d + c] = static_cast<float>(v);
        }
      }
      pack.matrices.emplace_back(manifest.layers[l], name, count, std::move(values));
    }
  }
  return pack;
}

}  // namespace mlod::synth
