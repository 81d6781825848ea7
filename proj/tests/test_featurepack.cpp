#include <doctest.h>

#include <fstream>
#include <json.hpp>

#include "mlod/error.hpp"
#include "mlod/featurepack.hpp"
#include "test_util.hpp"

using namespace mlod;
using testutil::kind_of;
using testutil::TempDir;

namespace {

void write_json(const std::filesystem::path& file, const nlohmann::json& j) {
  std::ofstream(file) << j.dump(2);
}

nlohmann::json two_layer_manifest() {
  return {{"version", 1},
          {"num_classes", 3},
          {"dtype", "f32le"},
          {"layers",
           {{{"name", "block1"}, {"kind", "features"}, {"dim", 4}, {"index", 1}},
            {{"name", "head"}, {"kind", "logits"}, {"dim", 3}, {"index", 2}}}},
          {"splits", {{"calibration", 5}, {"test_id", 2}, {"svhn", 3}}}};
}

}  // namespace

TEST_CASE("pack round trip preserves every value") {
  TempDir dir("roundtrip");
  const auto pack = testutil::small_pack(3, 5, 30, 10, 12, 1.5, 1);
  write_pack(pack, dir.path());
  const auto back = load_pack(dir.path());
  CHECK(back.manifest.layers == pack.manifest.layers);
  CHECK(back.manifest.splits == pack.manifest.splits);
  for (const auto& m : pack.matrices) {
    const auto& other = back.at(m.layer().index, m.split());
    REQUIRE(other.rows() == m.rows());
    CHECK(std::equal(m.values().begin(), m.values().end(), other.values().begin()));
  }
  CHECK(back.manifest.ood_splits() == std::vector<std::string>{"ood"});
}

TEST_CASE("matrix file names follow the layer/split convention") {
  CHECK(matrix_file_name(2, "test_id") == "layer_2_test_id.bin");
}

TEST_CASE("manifest parsing and layout checks") {
  TempDir dir("manifest");
  auto j = two_layer_manifest();
  write_json(dir.path() / "manifest.json", j);

  SUBCASE("missing matrix files") {
    CHECK(kind_of([&] { read_manifest(dir.path()); }) == ErrorKind::MissingFile);
  }

  SUBCASE("valid files load; a 4-byte-short file is rejected") {
    for (const auto& [split, n] : j["splits"].items()) {
      for (const auto& layer : j["layers"]) {
        const std::size_t bytes = n.get<std::size_t>() * layer["dim"].get<std::size_t>() * 4;
        std::ofstream out(dir.path() / matrix_file_name(layer["index"], split), std::ios::binary);
        const std::vector<char> zeros(bytes, 0);
        out.write(zeros.data(), static_cast<std::streamsize>(zeros.size()));
      }
    }
    const auto manifest = read_manifest(dir.path());
    CHECK(manifest.layer_count() == 2);
    CHECK(manifest.layer(2).kind == LayerKind::logits);
    CHECK(manifest.split_count("svhn") == 3);
    CHECK(kind_of([&] { manifest.split_count("cifar"); }) == ErrorKind::UnknownSplit);

    std::filesystem::resize_file(dir.path() / "layer_1_svhn.bin", 3 * 4 * 4 - 4);
    CHECK(kind_of([&] { read_manifest(dir.path()); }) == ErrorKind::SizeMismatch);
  }

  SUBCASE("non-contiguous layer indices") {
    j["layers"][1]["index"] = 3;
    write_json(dir.path() / "manifest.json", j);
    CHECK(kind_of([&] { read_manifest(dir.path()); }) == ErrorKind::SchemaError);
  }

  SUBCASE("logits width must equal the class count") {
    j["layers"][1]["dim"] = 4;
    write_json(dir.path() / "manifest.json", j);
    CHECK(kind_of([&] { read_manifest(dir.path()); }) == ErrorKind::SchemaError);
  }

  SUBCASE("wrong dtype and bad JSON") {
    j["dtype"] = "f64le";
    write_json(dir.path() / "manifest.json", j);
    CHECK(kind_of([&] { read_manifest(dir.path()); }) == ErrorKind::SchemaError);
    std::ofstream(dir.path() / "manifest.json") << "{ not json";
    CHECK(kind_of([&] { read_manifest(dir.path()); }) == ErrorKind::SchemaError);
  }

  SUBCASE("duplicate names") {
    j["layers"][1]["name"] = "block1";
    write_json(dir.path() / "manifest.json", j);
    CHECK(kind_of([&] { read_manifest(dir.path()); }) == ErrorKind::SchemaError);
  }
}

TEST_CASE("missing manifest") {
  TempDir dir("nomanifest");
  CHECK(kind_of([&] { read_manifest(dir.path()); }) == ErrorKind::MissingFile);
}

TEST_CASE("matrix construction validates size and finiteness") {
  const auto layer = testutil::features_layer(1, 2);
  CHECK(kind_of([&] { FeatureMatrix(layer, "calibration", 2, {1, 2, 3}); }) == ErrorKind::SizeMismatch);
  CHECK(kind_of([&] { FeatureMatrix(layer, "calibration", 2, {1, 2, NAN, 4}); }) == ErrorKind::NaNInData);
  CHECK(kind_of([&] { FeatureMatrix(layer, "calibration", 1, {INFINITY, 0}); }) == ErrorKind::NaNInData);

  const FeatureMatrix m(layer, "calibration", 3, {1, 2, 3, 4, 5, 6});
  CHECK(m(1, 0) == 3.0f);
  const auto tail = m.slice_rows(1, 2);
  CHECK(tail.rows() == 2);
  CHECK(tail.row(1)[1] == 6.0f);
  CHECK(kind_of([&] { m.slice_rows(2, 2); }) == ErrorKind::ShapeMismatch);
}

TEST_CASE("loading rejects NaN stored on disk") {
  TempDir dir("nan");
  auto pack = testutil::small_pack(1, 2, 4, 2, 2, 0.0, 3);
  write_pack(pack, dir.path());
  const float bad[2] = {NAN, 0.0f};
  std::fstream f(dir.path() / "layer_1_test_id.bin", std::ios::in | std::ios::out | std::ios::binary);
  f.write(reinterpret_cast<const char*>(bad), sizeof bad);
  f.close();
  CHECK(kind_of([&] { load_pack(dir.path()); }) == ErrorKind::NaNInData);
}

TEST_CASE("writing an incomplete grid fails") {
  TempDir dir("grid");
  auto pack = testutil::small_pack(2, 3, 4, 2, 2, 0.0, 4);
  pack.matrices.pop_back();
  CHECK(kind_of([&] { write_pack(pack, dir.path()); }) == ErrorKind::IncompleteGrid);
}

TEST_CASE("unknown split lookups fail") {
  const auto pack = testutil::small_pack(1, 2, 4, 2, 2, 0.0, 5);
  CHECK(kind_of([&] { pack.at(1, "places"); }) == ErrorKind::UnknownSplit);
  CHECK(kind_of([&] { pack.manifest.layer(7); }) == ErrorKind::SchemaError);
}

TEST_CASE("truncating any matrix file by a whole row is detected") {
  TempDir dir("truncate");
  const auto pack = testutil::small_pack(2, 3, 6, 4, 4, 0.0, 6);
  write_pack(pack, dir.path());
  for (const auto& m : pack.matrices) {
    TempDir copy("truncate_copy");
    std::filesystem::copy(dir.path(), copy.path(), std::filesystem::copy_options::recursive);
    const auto file = copy.path() / matrix_file_name(m.layer().index, m.split());
    std::filesystem::resize_file(file, std::filesystem::file_size(file) - m.cols() * 4);
    CHECK(kind_of([&] { load_pack(copy.path()); }) == ErrorKind::SizeMismatch);
  }
}

TEST_CASE("manifest JSON round trips through the validator") {
  auto pack = testutil::small_pack(2, 3, 6, 4, 4, 0.0, 7);
  const auto j = nlohmann::json::parse(manifest_to_json(pack.manifest));
  CHECK(j["dtype"] == "f32le");
  CHECK(j["layers"].size() == 2);
  CHECK(j["splits"]["ood"] == 4);
}
