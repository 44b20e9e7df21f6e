#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "lowlight/error.hpp"
#include "lowlight/experiments.hpp"
#include "lowlight/image_io.hpp"
#include "lowlight/metrics.hpp"
#include "lowlight/sensor_sim.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace lowlight;
namespace lt = lowlight::testing;

TEST_SUITE("metrics") {

TEST_CASE("a uniform 0.1 offset scores exactly 20 dB") {
  Image a(3, 16, 16, 0.2f), b(3, 16, 16, 0.2f);
  for (auto& v : b.pixels) v = 0.3f;
  // The float gap is not exactly 0.1, so compare against the oracle too.
  CHECK(eval::psnr(a, b) == doctest::Approx(20.0).epsilon(1e-5));
  CHECK(std::abs(eval::psnr(a, b) - lt::psnr_oracle(a, b)) <= 1e-6);
  Image c(1, 4, 4, 0.0f), d(1, 4, 4, 0.0f);
  for (std::size_t i = 0; i < d.pixels.size(); ++i) d.pixels[i] = (i % 2) ? 0.125f : -0.125f;
  // MSE = 1/64, PSNR = 10 log10 64.
  CHECK(std::abs(eval::psnr(c, d) - 10.0 * std::log10(64.0)) <= 1e-9);
}

TEST_CASE("identical images hit the cap") {
  const Image a = lt::random_image(3, 8, 8, 1);
  CHECK(eval::psnr(a, a) == eval::kPsnrCap);
  CHECK_THROWS_AS(eval::psnr(a, Image(3, 8, 9)), ShapeError);
}

TEST_CASE("psnr agrees with the oracle on random pairs") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Image a = lt::random_image(3, 20, 24, s), b = lt::random_image(3, 20, 24, s + 100);
    CHECK(std::abs(eval::psnr(a, b) - lt::psnr_oracle(a, b)) <= 1e-6);
  }
}

TEST_CASE("ssim of an image with itself is one") {
  const Image a = lt::random_image(3, 32, 32, 4);
  CHECK(eval::ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim agrees with the windowed oracle") {
  for (std::uint64_t s = 0; s < 4; ++s) {
    Image a = lt::random_image(3, 24, 28, s);
    Image b = a;
    std::mt19937_64 rng(s);
    std::normal_distribution<float> n(0.0f, 0.1f);
    for (auto& v : b.pixels) v = std::clamp(v + n(rng), 0.0f, 1.0f);
    CHECK(std::abs(eval::ssim(a, b) - lt::ssim_oracle(a, b)) <= 1e-6);
  }
  const Image g = lt::random_image(1, 16, 16, 9), h = lt::random_image(1, 16, 16, 10);
  CHECK(std::abs(eval::ssim(g, h) - lt::ssim_oracle(g, h)) <= 1e-6);
}

TEST_CASE("ssim is symmetric and negative for an inverted image") {
  const Image a = lt::random_image(3, 24, 24, 1), b = lt::random_image(3, 24, 24, 2);
  CHECK(eval::ssim(a, b) == doctest::Approx(eval::ssim(b, a)).epsilon(1e-12));
  Image inv = a;
  for (auto& v : inv.pixels) v = 1.0f - v;
  CHECK(eval::ssim(a, inv) < 0.0);
  CHECK_THROWS_AS(eval::ssim(Image(1, 8, 8), Image(1, 8, 8)), Error);
}

TEST_CASE("luminance weights") {
  Image rgb(3, 1, 1);
  rgb.pixels = {1.0f, 0.0f, 0.0f};
  CHECK(eval::luminance(rgb).pixels[0] == doctest::Approx(0.299));
  rgb.pixels = {0.0f, 0.0f, 1.0f};
  CHECK(eval::luminance(rgb).pixels[0] == doctest::Approx(0.114));
}

TEST_CASE("bilinear demosaic reproduces a flat color") {
  sim::CleanScene scene;
  scene.radiance = Image(3, 16, 16);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      scene.radiance.at(0, y, x) = 0.6f;
      scene.radiance.at(1, y, x) = 0.3f;
      scene.radiance.at(2, y, x) = 0.1f;
    }
  const Image out = eval::bilinear_demosaic(sim::mosaic(scene));
  for (std::size_t i = 0; i < out.pixels.size(); ++i)
    CHECK(out.pixels[i] == doctest::Approx(scene.radiance.pixels[i]).epsilon(1e-6));
}

TEST_CASE("brightness-only recovers a noiseless underexposure") {
  const auto scene = sim::generate_scene(5, 64, 64, sim::SceneStyle::kIndoor);
  const auto dark = sim::expose(sim::mosaic(scene), 1.0, 10.0);
  const Image out = eval::brightness_only_baseline(raw::pack_bayer(dark), 10.0);
  const Image ref = sim::render_exposure_srgb(scene, 10.0, 10.0);
  CHECK(out.height == 64);
  CHECK(eval::psnr(out, ref) > 25.0);
  const Image wrong = eval::brightness_only_baseline(raw::pack_bayer(dark), 1.0);
  CHECK(eval::psnr(wrong, ref) < eval::psnr(out, ref));
}

}  // TEST_SUITE metrics

TEST_SUITE("image_io") {

TEST_CASE("png round-trips at 8-bit precision") {
  const Image a = lt::random_image(3, 7, 9, 2);
  const Image back = decode_png(encode_png(a));
  REQUIRE(back.channels == 3);
  CHECK(back.height == 7);
  CHECK(back.width == 9);
  for (std::size_t i = 0; i < a.pixels.size(); ++i)
    CHECK(std::abs(back.pixels[i] - a.pixels[i]) <= 0.5f / 255.0f + 1e-6f);
  const Image gray = decode_png(encode_png(lt::random_image(1, 4, 4, 3)));
  CHECK(gray.channels == 1);
  CHECK(encode_png(a) == encode_png(a));
}

TEST_CASE("out-of-range values are clipped") {
  Image a(1, 1, 2);
  a.pixels = {-0.5f, 1.5f};
  const Image back = decode_png(encode_png(a));
  CHECK(back.pixels[0] == 0.0f);
  CHECK(back.pixels[1] == 1.0f);
}

TEST_CASE("garbage is a format error") {
  CHECK_THROWS_AS(decode_png({1, 2, 3, 4, 5, 6, 7, 8, 9}), FormatError);
  auto bytes = encode_png(lt::random_image(3, 8, 8, 1));
  bytes.resize(bytes.size() / 2);
  CHECK_THROWS_AS(decode_png(bytes), FormatError);
}

}  // TEST_SUITE image_io

TEST_SUITE("experiments") {

TEST_CASE("log-linear alpha2 between anchors") {
  CHECK(eval::log_linear_alpha2(1.0, 1.0, 10.0) == 0.0);
  CHECK(eval::log_linear_alpha2(10.0, 1.0, 10.0) == doctest::Approx(1.0));
  CHECK(eval::log_linear_alpha2(5.0, 1.0, 10.0) == doctest::Approx(0.69897).epsilon(1e-5));
  CHECK(eval::log_linear_alpha2(0.5, 1.0, 10.0) < 0.0);
}

TEST_CASE("protocol names round-trip") {
  for (auto p : {eval::Protocol::kA, eval::Protocol::kB, eval::Protocol::kC, eval::Protocol::kD,
                 eval::Protocol::kAblationFilter, eval::Protocol::kAblationDirection,
                 eval::Protocol::kRangeSweep})
    CHECK(eval::parse_protocol(eval::to_string(p)) == p);
  CHECK_THROWS_AS(eval::parse_protocol("Z"), Error);
}

TEST_CASE("catalog names encode exposures in milliseconds") {
  const eval::ModelCatalog cat("models");
  CHECK(cat.fixed(0.1, 1.0).filename() == "fixed_in100_t1000.lxck");
  CHECK(cat.mixed(0.1, {1.0, 10.0}).filename() == "mixed_in100_t1000-10000.lxck");
  CHECK(cat.continuous(0.1, 1.0, 10.0, 3).filename() == "continuous_in100_t1000-10000_k3.lxck");
}

TEST_CASE("report table and csv layout") {
  eval::MetricReport r;
  r.experiment_id = "C";
  r.config = {{"input", "0.1"}};
  r.fingerprint = 0xabc;
  eval::ReportRow row;
  row.label = "continuous grid @5";
  row.trained = "0.1=>1,10";
  row.test_exposure = 5.0;
  row.alpha1 = 50.0;
  row.images = {{0, 30.0, 0.9, 0.7}, {1, 32.0, 0.8, 0.6}};
  row.finalize();
  CHECK(row.mean_psnr == doctest::Approx(31.0));
  CHECK(row.mean_ssim == doctest::Approx(0.85));
  r.rows.push_back(row);
  const std::string table = r.to_table();
  CHECK(table.rfind("# experiment: C\n# fingerprint: 0000000000000abc\n# config.input: 0.1\n", 0) ==
        0);
  CHECK(table.find("31.0000") != std::string::npos);
  CHECK(table.find("grid") != std::string::npos);
  const std::string csv = r.to_csv();
  std::istringstream lines(csv);
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) ++n;
  CHECK(n == 4);
  CHECK(csv.find("continuous grid @5,\"0.1=>1,10\",mean,5,50,grid") != std::string::npos);
  CHECK(&r.row("continuous grid @5") == &r.rows[0]);
  CHECK_THROWS_AS(r.row("nope"), Error);

  lt::TempDir dir("report");
  r.write(dir.path() / "sub" / "rep");
  CHECK(std::filesystem::exists(dir.path() / "sub" / "rep.txt"));
  CHECK(std::filesystem::exists(dir.path() / "sub" / "rep.csv"));
}

TEST_CASE("missing checkpoints name the command that trains them") {
  lt::TempDir dir("catalog");
  const eval::ModelCatalog cat(dir.path());
  eval::TrainingPlan plan;
  plan.dataset_path = "data/ds";
  eval::ExperimentSpec spec;
  try {
    eval::run_protocol(spec, lt::tiny_dataset(), cat, plan);
    FAIL("expected not found");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNotFound);
    const std::string msg = e.what();
    CHECK(msg.find("lowlight train --dataset data/ds") != std::string::npos);
    CHECK(msg.find("lowlight finetune") != std::string::npos);
  }
  spec.anchors = {1.0};
  CHECK_THROWS_AS(spec.validate(lt::tiny_dataset()), Error);
  spec = {};
  spec.test_exposure = 3.0;
  CHECK_THROWS_AS(spec.validate(lt::tiny_dataset()), Error);
}

TEST_CASE("protocol C end to end on a tiny model") {
  lt::TempDir dir("protocol_c");
  const eval::ModelCatalog cat(dir.path());
  eval::TrainingPlan plan;
  plan.unet = lt::tiny_unet();
  plan.schedule = lt::tiny_schedule(2);
  const auto& ds = lt::tiny_dataset();
  const auto m = eval::ensure_continuous(cat, ds, 0.1, 1.0, 10.0, 3, plan);
  CHECK(std::filesystem::exists(cat.continuous(0.1, 1.0, 10.0, 3)));
  CHECK(std::filesystem::exists(cat.fixed(0.1, 1.0)));
  REQUIRE(m.anchors.size() == 2);
  CHECK(m.anchors[0].alpha1 == doctest::Approx(10.0));
  CHECK(m.anchors[0].alpha2 == 0.0);
  CHECK(m.anchors[1].alpha1 == doctest::Approx(100.0));
  CHECK(m.anchors[1].alpha2 == 1.0);

  eval::ExperimentSpec spec;
  const auto report = eval::run_protocol(spec, ds, cat, plan);
  const auto& grid = report.row("continuous grid @1");
  const auto& loglin = report.row("continuous log-linear @1");
  CHECK(grid.images.size() == 2);
  CHECK_FALSE(grid.alpha2.has_value());
  CHECK(*loglin.alpha2 == 0.0);
  // alpha2 = 0 is on the grid, so the per-image best cannot be worse.
  CHECK(grid.mean_psnr >= loglin.mean_psnr);
  CHECK(report.row("continuous log-linear @5").alpha2.value() ==
        doctest::Approx(0.69897).epsilon(1e-5));
  CHECK(report.to_table() == eval::run_protocol(spec, ds, cat, plan).to_table());
}

}  // TEST_SUITE experiments
