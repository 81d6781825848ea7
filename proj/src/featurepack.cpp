#include "mlod/featurepack.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mlod/error.hpp"

namespace mlod {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kManifestFile = "manifest.json";
constexpr std::string_view kDtype = "f32le";

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0x0000ff00u) | ((v << 8) & 0x00ff0000u) | (v << 24);
}

// Storage is little-endian; swap in place on big-endian hosts.
void to_from_le(std::vector<float>& values) {
  if constexpr (std::endian::native == std::endian::big) {
    for (float& v : values) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      bits = byteswap32(bits);
      std::memcpy(&v, &bits, sizeof bits);
    }
  }
}

bool valid_split_name(std::string_view name) {
  if (name.empty()) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
           c == '-' || c == '.';
  });
}

std::string where(const LayerSpec& layer, std::string_view split) {
  std::ostringstream os;
  os << "layer " << layer.index << ", split " << split;
  return os.str();
}

}  // namespace

std::string_view to_string(LayerKind kind) noexcept {
  return kind == LayerKind::logits ? "logits" : "features";
}

LayerKind layer_kind_from_string(std::string_view text) {
  if (text == "features") return LayerKind::features;
  if (text == "logits") return LayerKind::logits;
  throw Error(ErrorKind::SchemaError, "unknown layer kind '" + std::string(text) + "'");
}

const LayerSpec& PackManifest::layer(int index) const {
  for (const auto& l : layers)
    if (l.index == index) return l;
  throw Error(ErrorKind::SchemaError, "no layer with index " + std::to_string(index));
}

bool PackManifest::has_split(std::string_view split) const {
  return splits.find(std::string(split)) != splits.end();
}

std::size_t PackManifest::split_count(std::string_view split) const {
  auto it = splits.find(std::string(split));
  if (it == splits.end()) throw Error(ErrorKind::UnknownSplit, "split '" + std::string(split) + "' not in manifest");
  return it->second;
}

std::vector<std::string> PackManifest::ood_splits() const {
  std::vector<std::string> out;
  for (const auto& [name, count] : splits)
    if (name != kCalibrationSplit && name != kTestIdSplit) out.push_back(name);
  return out;
}

FeatureMatrix::FeatureMatrix(LayerSpec layer, std::string split, std::size_t rows, std::vector<float> values)
    : layer_(std::move(layer)), split_(std::move(split)), rows_(rows), values_(std::move(values)) {
  if (layer_.dim == 0) throw Error(ErrorKind::SchemaError, "layer dim must be positive");
  if (values_.size() != rows_ * layer_.dim)
    throw Error(ErrorKind::SizeMismatch, where(layer_, split_) + ": expected " + std::to_string(rows_ * layer_.dim) +
                                             " values, got " + std::to_string(values_.size()));
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i]))
      throw Error(ErrorKind::NaNInData, where(layer_, split_) + ": non-finite value at row " +
                                            std::to_string(i / layer_.dim) + ", column " +
                                            std::to_string(i % layer_.dim));
  }
}

FeatureMatrix FeatureMatrix::slice_rows(std::size_t first, std::size_t count) const {
  if (first + count > rows_) throw Error(ErrorKind::ShapeMismatch, "row slice out of range");
  std::vector<float> part(values_.begin() + first * layer_.dim, values_.begin() + (first + count) * layer_.dim);
  return FeatureMatrix(layer_, split_, count, std::move(part));
}

const FeatureMatrix& FeaturePack::at(int layer_index, std::string_view split) const {
  for (const auto& m : matrices)
    if (m.layer().index == layer_index && m.split() == split) return m;
  if (!manifest.has_split(split)) throw Error(ErrorKind::UnknownSplit, "split '" + std::string(split) + "' not in pack");
  throw Error(ErrorKind::IncompleteGrid, "no matrix for layer " + std::to_string(layer_index) + ", split " +
                                             std::string(split));
}

std::string matrix_file_name(int layer_index, std::string_view split) {
  return "layer_" + std::to_string(layer_index) + "_" + std::string(split) + ".bin";
}

void validate_manifest(PackManifest& manifest) {
  if (manifest.version != kPackVersion)
    throw Error(ErrorKind::SchemaError, "unsupported manifest version " + std::to_string(manifest.version));
  if (manifest.layers.empty()) throw Error(ErrorKind::SchemaError, "pack declares no layers");
  if (manifest.splits.empty()) throw Error(ErrorKind::SchemaError, "pack declares no splits");

  std::set<std::string> names;
  std::set<int> indices;
  for (const auto& l : manifest.layers) {
    if (l.name.empty()) throw Error(ErrorKind::SchemaError, "empty layer name");
    if (!names.insert(l.name).second) throw Error(ErrorKind::SchemaError, "duplicate layer name '" + l.name + "'");
    if (!indices.insert(l.index).second)
      throw Error(ErrorKind::SchemaError, "duplicate layer index " + std::to_string(l.index));
    if (l.dim == 0) throw Error(ErrorKind::SchemaError, "layer '" + l.name + "' has zero dim");
    if (l.kind == LayerKind::logits && l.dim != manifest.num_classes)
      throw Error(ErrorKind::SchemaError, "logits layer '" + l.name + "' dim " + std::to_string(l.dim) +
                                              " != num_classes " + std::to_string(manifest.num_classes));
  }
  const int m = static_cast<int>(manifest.layers.size());
  if (*indices.begin() != 1 || *indices.rbegin() != m)
    throw Error(ErrorKind::SchemaError, "layer indices must be contiguous 1.." + std::to_string(m));

  for (const auto& [name, count] : manifest.splits) {
    if (!valid_split_name(name)) throw Error(ErrorKind::SchemaError, "invalid split name '" + name + "'");
    if (count == 0) throw Error(ErrorKind::SchemaError, "split '" + name + "' is empty");
  }
  std::sort(manifest.layers.begin(), manifest.layers.end(),
            [](const LayerSpec& a, const LayerSpec& b) { return a.index < b.index; });
}

std::string manifest_to_json(const PackManifest& manifest) {
  json j;
  j["version"] = manifest.version;
  j["num_classes"] = manifest.num_classes;
  j["dtype"] = kDtype;
  j["layers"] = json::array();
  for (const auto& l : manifest.layers)
    j["layers"].push_back({{"name", l.name}, {"kind", to_string(l.kind)}, {"dim", l.dim}, {"index", l.index}});
  j["splits"] = json::object();
  for (const auto& [name, count] : manifest.splits) j["splits"][name] = count;
  if (!manifest.labels_present.empty()) j["labels_present"] = manifest.labels_present;
  return j.dump(2) + "\n";
}

PackManifest read_manifest(const fs::path& dir) {
  const fs::path file = dir / kManifestFile;
  std::ifstream in(file);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open " + file.string());

  PackManifest manifest;
  manifest.root = dir;
  try {
    const json j = json::parse(in);
    manifest.version = j.at("version").get<int>();
    manifest.num_classes = j.at("num_classes").get<std::size_t>();
    if (j.at("dtype").get<std::string>() != kDtype)
      throw Error(ErrorKind::SchemaError, "dtype must be \"f32le\"");
    for (const auto& l : j.at("layers")) {
      LayerSpec spec;
      spec.name = l.at("name").get<std::string>();
      spec.kind = layer_kind_from_string(l.at("kind").get<std::string>());
      const auto dim = l.at("dim").get<long long>();
      if (dim < 1) throw Error(ErrorKind::SchemaError, "layer '" + spec.name + "' has non-positive dim");
      spec.dim = static_cast<std::size_t>(dim);
      spec.index = l.at("index").get<int>();
      manifest.layers.push_back(std::move(spec));
    }
    for (const auto& [name, count] : j.at("splits").items()) {
      const auto n = count.get<long long>();
      if (n < 0) throw Error(ErrorKind::SchemaError, "negative count for split '" + name + "'");
      manifest.splits[name] = static_cast<std::size_t>(n);
    }
    if (j.contains("labels_present"))
      for (const auto& [name, flag] : j["labels_present"].items()) manifest.labels_present[name] = flag.get<bool>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::SchemaError, std::string("malformed manifest: ") + e.what());
  }
  validate_manifest(manifest);

  for (const auto& layer : manifest.layers) {
    for (const auto& [split, count] : manifest.splits) {
      const fs::path bin = dir / matrix_file_name(layer.index, split);
      std::error_code ec;
      if (!fs::is_regular_file(bin, ec)) throw Error(ErrorKind::MissingFile, where(layer, split) + ": " + bin.string());
      const auto size = fs::file_size(bin, ec);
      const auto expected = count * layer.dim * sizeof(float);
      if (ec || size != expected)
        throw Error(ErrorKind::SizeMismatch, where(layer, split) + ": " + bin.filename().string() + " has " +
                                                 std::to_string(size) + " bytes, expected " + std::to_string(expected));
    }
  }
  return manifest;
}

FeatureMatrix load_split(const PackManifest& manifest, const LayerSpec& layer, std::string_view split) {
  const std::size_t rows = manifest.split_count(split);
  const fs::path bin = manifest.root / matrix_file_name(layer.index, split);
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, where(layer, split) + ": " + bin.string());
  std::vector<float> values(rows * layer.dim);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(values.size() * sizeof(float)))
    throw Error(ErrorKind::SizeMismatch, where(layer, split) + ": short read from " + bin.string());
  to_from_le(values);
  return FeatureMatrix(layer, std::string(split), rows, std::move(values));
}

FeaturePack load_pack(const fs::path& dir) {
  FeaturePack pack;
  pack.manifest = read_manifest(dir);
  for (const auto& layer : pack.manifest.layers)
    for (const auto& [split, count] : pack.manifest.splits)
      pack.matrices.push_back(load_split(pack.manifest, layer, split));
  return pack;
}

void write_pack(std::span<const FeatureMatrix> matrices, const PackManifest& manifest, const fs::path& dir) {
  PackManifest checked = manifest;
  validate_manifest(checked);

  // Exactly one matrix per (layer, split) cell, with the declared shape.
  std::map<std::pair<int, std::string>, const FeatureMatrix*> grid;
  for (const auto& m : matrices) {
    if (!checked.has_split(m.split()))
      throw Error(ErrorKind::IncompleteGrid, "matrix for undeclared split '" + m.split() + "'");
    const auto& declared = checked.layer(m.layer().index);
    if (!(declared == m.layer()))
      throw Error(ErrorKind::IncompleteGrid, "matrix layer spec differs from manifest for layer " +
                                                 std::to_string(m.layer().index));
    if (m.rows() != checked.split_count(m.split()))
      throw Error(ErrorKind::IncompleteGrid, where(declared, m.split()) + ": row count differs from manifest");
    if (!grid.emplace(std::make_pair(m.layer().index, m.split()), &m).second)
      throw Error(ErrorKind::IncompleteGrid, where(declared, m.split()) + ": duplicate matrix");
  }
  for (const auto& layer : checked.layers)
    for (const auto& [split, count] : checked.splits)
      if (!grid.count({layer.index, split}))
        throw Error(ErrorKind::IncompleteGrid, where(layer, split) + ": matrix missing");

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + dir.string() + ": " + ec.message());

  for (const auto& [key, m] : grid) {
    const fs::path bin = dir / matrix_file_name(key.first, key.second);
    std::ofstream out(bin, std::ios::binary | std::ios::trunc);
    std::vector<float> le(m->values().begin(), m->values().end());
    to_from_le(le);
    out.write(reinterpret_cast<const char*>(le.data()), static_cast<std::streamsize>(le.size() * sizeof(float)));
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + bin.string());
  }
  std::ofstream out(dir / kManifestFile, std::ios::trunc);
  out << manifest_to_json(checked);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot write manifest in " + dir.string());
}

void write_pack(const FeaturePack& pack, const fs::path& dir) { write_pack(pack.matrices, pack.manifest, dir); }

}  // namespace mlod
