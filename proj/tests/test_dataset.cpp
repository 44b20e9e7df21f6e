#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "lowlight/dataset.hpp"
#include "lowlight/error.hpp"
#include "support/tempdir.hpp"

using namespace lowlight;
using namespace lowlight::sim;
namespace fs = std::filesystem;

namespace {

DatasetConfig small_config(int scenes = 10) {
  DatasetConfig c;
  c.scenes = scenes;
  c.width = 32;
  c.height = 32;
  c.seed = 3;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("raw and float map files round-trip") {
  lowlight::testing::TempDir dir("io");
  raw::RawImage r(6, 4, 0.0f, 0.03125f);
  for (std::size_t i = 0; i < r.mosaic.size(); ++i) r.mosaic[i] = 0.01f * i;
  write_raw(dir.path() / "a.lxrw", r);
  const raw::RawImage back = read_raw(dir.path() / "a.lxrw");
  CHECK(back.width == 6);
  CHECK(back.height == 4);
  CHECK(back.black_level == 0.03125f);
  CHECK(back.mosaic == r.mosaic);

  FloatMapStack stack;
  stack.exposures = {1.0, 10.0};
  stack.frames = {Image(3, 2, 4, 0.25f), Image(3, 2, 4, 0.75f)};
  write_float_map(dir.path() / "b.lxpm", stack);
  const FloatMapStack sb = read_float_map(dir.path() / "b.lxpm");
  CHECK(sb.exposures == stack.exposures);
  REQUIRE(sb.frames.size() == 2);
  CHECK(sb.frames[1].pixels == stack.frames[1].pixels);
}

TEST_CASE("corrupt and truncated files raise format errors") {
  lowlight::testing::TempDir dir("corrupt");
  write_raw(dir.path() / "a.lxrw", raw::RawImage(4, 4, 0.5f));
  std::string bytes = slurp(dir.path() / "a.lxrw");
  {
    std::ofstream out(dir.path() / "trunc.lxrw", std::ios::binary);
    out << bytes.substr(0, bytes.size() - 3);
  }
  bytes[0] = 'X';
  {
    std::ofstream out(dir.path() / "magic.lxrw", std::ios::binary);
    out << bytes;
  }
  CHECK_THROWS_AS(read_raw(dir.path() / "trunc.lxrw"), FormatError);
  CHECK_THROWS_AS(read_raw(dir.path() / "magic.lxrw"), FormatError);
  try {
    read_raw(dir.path() / "missing.lxrw");
    FAIL("expected an io error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIo);
    CHECK(std::string(e.what()).find("missing.lxrw") != std::string::npos);
  }
}

TEST_CASE("ten scenes split 7/1/2 with both styles in every split") {
  lowlight::testing::TempDir dir("split");
  const DatasetManifest m = build_dataset(small_config(), dir.path());
  CHECK(m.count(Split::kTrain) == 7);
  CHECK(m.count(Split::kVal) == 1);
  CHECK(m.count(Split::kTest) == 2);
  int indoor_train = 0, outdoor_train = 0;
  for (const auto& s : m.scenes) {
    CHECK(s.raw_files.size() == 5);
    CHECK(s.style == (s.id % 2 == 0 ? SceneStyle::kIndoor : SceneStyle::kOutdoor));
    if (s.split == Split::kTrain) (s.style == SceneStyle::kIndoor ? indoor_train : outdoor_train)++;
  }
  CHECK(std::abs(indoor_train - outdoor_train) <= 1);
  const auto ds = Dataset::load(dir.path());
  for (const auto* s : ds.split(Split::kTest)) {
    CHECK(s->entry.split == Split::kTest);
  }
}

TEST_CASE("sixty scenes split 42/6/12") {
  DatasetManifest m;
  lowlight::testing::TempDir dir("sixty");
  DatasetConfig c = small_config(60);
  c.width = c.height = 8;
  m = build_dataset(c, dir.path());
  CHECK(m.count(Split::kTrain) == 42);
  CHECK(m.count(Split::kVal) == 6);
  CHECK(m.count(Split::kTest) == 12);
}

TEST_CASE("rebuilding with the same seed is byte-identical") {
  lowlight::testing::TempDir a("det_a"), b("det_b");
  const auto ma = build_dataset(small_config(), a.path());
  const auto mb = build_dataset(small_config(), b.path());
  CHECK(ma.hash() == mb.hash());
  for (const auto& entry : fs::directory_iterator(a.path())) {
    const auto name = entry.path().filename();
    CHECK(slurp(entry.path()) == slurp(b.path() / name));
  }
  DatasetConfig other = small_config();
  other.seed = 4;
  lowlight::testing::TempDir c("det_c");
  CHECK(build_dataset(other, c.path()).hash() != ma.hash());
}

TEST_CASE("manifest text round-trips") {
  lowlight::testing::TempDir dir("manifest");
  const auto m = build_dataset(small_config(), dir.path());
  const auto parsed = DatasetManifest::parse(m.to_text(), "test");
  CHECK(parsed.to_text() == m.to_text());
  CHECK(parsed.hash() == m.hash());
  CHECK_THROWS_AS(DatasetManifest::parse("version = 1\nwidth = banana\n", "bad"), Error);
}

TEST_CASE("loaded dataset exposes raws and targets per exposure") {
  lowlight::testing::TempDir dir("load");
  const auto m = build_dataset(small_config(), dir.path());
  const auto ds = Dataset::load(dir.path());
  REQUIRE(ds.scenes().size() == 10);
  const auto& s = ds.scenes()[0];
  const auto& r01 = ds.raw(s, 0.1);
  const auto& r10 = ds.raw(s, 10.0);
  CHECK(r01.width == 32);
  CHECK(r01.black_level == m.black_level);
  double mean01 = 0, mean10 = 0;
  for (float v : r01.mosaic) mean01 += v;
  for (float v : r10.mosaic) mean10 += v;
  CHECK(mean10 > 5 * mean01);
  const Image& t1 = ds.target(s, 1.0);
  const Image& t10 = ds.target(s, 10.0);
  CHECK(t1.channels == 3);
  CHECK(t1.height == 32);
  double m1 = 0, m10 = 0;
  for (float v : t1.pixels) m1 += v;
  for (float v : t10.pixels) m10 += v;
  CHECK(m10 > m1);
  CHECK_THROWS_AS(ds.exposure_index(2.0), Error);
  lowlight::testing::TempDir empty("empty");
  try {
    Dataset::load(empty.path());
    FAIL("expected not found");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNotFound);
  }
}

TEST_CASE("config validation") {
  DatasetConfig c = small_config(9);
  CHECK_THROWS_AS(c.validate(), Error);
  c = small_config();
  c.width = 31;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(raw_file_name(3, 0.1) == "scene_003_exp_100.lxrw");
  CHECK(raw_file_name(12, 10.0) == "scene_012_exp_10000.lxrw");
  CHECK(gt_file_name(7) == "scene_007_gt.lxpm");
  CHECK(parse_split("val") == Split::kVal);
}

}  // TEST_SUITE
