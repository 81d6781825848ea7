#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mlod {

inline constexpr std::string_view kCalibrationSplit = "calibration";
inline constexpr std::string_view kTestIdSplit = "test_id";
inline constexpr int kPackVersion = 1;

enum class LayerKind { features, logits };

std::string_view to_string(LayerKind kind) noexcept;
LayerKind layer_kind_from_string(std::string_view text);

/// One tapped layer. `index` is the 1-based depth position; index 1 is the
/// shallowest tap.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::features;
  std::size_t dim = 0;
  int index = 0;

  bool operator==(const LayerSpec&) const = default;
};

struct PackManifest {
  int version = kPackVersion;
  std::size_t num_classes = 0;
  std::vector<LayerSpec> layers;                 // sorted by index after validation
  std::map<std::string, std::size_t> splits;     // split name -> sample count
  std::map<std::string, bool> labels_present;    // optional, informational only
  std::filesystem::path root;                    // directory the pack lives in

  std::size_t layer_count() const noexcept { return layers.size(); }
  const LayerSpec& layer(int index) const;
  bool has_split(std::string_view split) const;
  std::size_t split_count(std::string_view split) const;

  /// Every split other than calibration and test_id, in name order.
  std::vector<std::string> ood_splits() const;
};

/// Row-major (count x dim) block of one layer over one split. Values are
/// finite; the constructor enforces it.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(LayerSpec layer, std::string split, std::size_t rows, std::vector<float> values);

  const LayerSpec& layer() const noexcept { return layer_; }
  const std::string& split() const noexcept { return split_; }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return layer_.dim; }
  std::span<const float> values() const noexcept { return values_; }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(values_).subspan(i * layer_.dim, layer_.dim);
  }
  float operator()(std::size_t i, std::size_t j) const { return values_[i * layer_.dim + j]; }

  /// Copy of rows [first, first + count).
  FeatureMatrix slice_rows(std::size_t first, std::size_t count) const;

 private:
  LayerSpec layer_;
  std::string split_;
  std::size_t rows_ = 0;
  std::vector<float> values_;
};

/// A manifest together with its full (layer, split) grid in memory.
struct FeaturePack {
  PackManifest manifest;
  std::vector<FeatureMatrix> matrices;

  const FeatureMatrix& at(int layer_index, std::string_view split) const;
};

std::string matrix_file_name(int layer_index, std::string_view split);

/// Parses and validates `<dir>/manifest.json`, then checks that every declared
/// matrix file exists with the expected byte length.
PackManifest read_manifest(const std::filesystem::path& dir);

/// Validates the schema-level invariants of a manifest (no file access).
void validate_manifest(PackManifest& manifest);

FeatureMatrix load_split(const PackManifest& manifest, const LayerSpec& layer, std::string_view split);
FeaturePack load_pack(const std::filesystem::path& dir);

void write_pack(std::span<const FeatureMatrix> matrices, const PackManifest& manifest,
                const std::filesystem::path& dir);
void write_pack(const FeaturePack& pack, const std::filesystem::path& dir);

std::string manifest_to_json(const PackManifest& manifest);

}  // namespace mlod
