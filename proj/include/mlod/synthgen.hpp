#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mlod/featurepack.hpp"

namespace mlod::synth {

/// Gaussian layer features with one shared latent factor and a sparse mean
/// shift for the OOD split:
///   ID:  x_l = sqrt(1 - rho) * eps_l + sqrt(rho) * z * 1
///   OOD: same, plus `shift_magnitude` on coordinate 0 of every layer in
///        `shift_layers`.
struct SynthSpec {
  std::size_t m = 4;
  std::vector<std::size_t> dims{64, 64, 64, 64};
  std::size_t n_cal = 10000;
  std::size_t n_id = 5000;
  std::size_t n_ood = 5000;
  std::vector<int> shift_layers;  // 1-based
  double shift_magnitude = 0.0;
  double correlation = 0.0;
  std::uint64_t seed = 7;
  std::string ood_name = "ood";

  void validate() const;
};

inline constexpr std::string_view kScenarioNames[] = {"null", "early_shift", "late_shift", "all_shift",
                                                      "correlated_early"};

/// Presets share m=4, d=64, n_cal=10000, n_id=n_ood=5000, seed=7:
///   null              no shift
///   early_shift       layer 1, mu=4
///   late_shift        layer 4, mu=4
///   all_shift         layers 1-4, mu=2
///   correlated_early  layer 1, mu=4, rho=0.5
SynthSpec scenario(std::string_view name);

SynthSpec spec_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const SynthSpec& spec);

/// Deterministic in the spec: every coordinate is drawn from a counter-based
/// stream keyed by (seed, split, sample, layer, coordinate), so output does
/// not depend on thread count or generation order.
FeaturePack generate(const SynthSpec& spec);

/// Standard normal draw for one key; exposed for tests.
double counter_normal(std::uint64_t seed, std::uint64_t split, std::uint64_t sample, std::uint64_t layer,
                      std::uint64_t coord);

}  // namespace mlod::synth
