#include <fstream>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"
#include "lowlight/checkpoint.hpp"
#include "lowlight/dataset.hpp"
#include "lowlight/error.hpp"
#include "lowlight/image_io.hpp"
#include "lowlight/sensor_sim.hpp"
#include "lowlight/service.hpp"
#include "support/fixtures.hpp"
#include "support/tempdir.hpp"

using namespace lowlight;
using json = nlohmann::json;
namespace lt = lowlight::testing;

namespace {

// Assets: a base checkpoint, the same network with a perturbed modulation,
// a 64x64 dark raw and an odd-sized raw written byte by byte.
struct Assets {
  lt::TempDir dir{"service"};

  Assets() {
    auto base = model::build_unet(lt::tiny_unet(), 3);
    base.anchors = {{10.0, 0.0, 1.0}};
    model::save_checkpoint(base, dir.path() / "base.lxck");
    auto cont = base.clone();
    model::insert_modulation(cont, 3);
    std::mt19937_64 rng(1);
    std::normal_distribution<float> n(0.0f, 0.1f);
    for (auto& t : cont.modulation_tensors())
      for (auto& v : t.tensor.mutable_data()) v += n(rng);
    cont.anchors = {{10.0, 0.0, 1.0}, {100.0, 1.0, 10.0}};
    model::save_checkpoint(cont, dir.path() / "cont.lxck");

    const auto scene = sim::generate_scene(4, 64, 64, sim::SceneStyle::kOutdoor);
    sim::write_raw(dir.path() / "dark.lxrw", sim::expose(sim::mosaic(scene), 0.1, 10.0));
    sim::write_raw(dir.path() / "wide.lxrw", sim::expose(sim::mosaic(
        sim::generate_scene(4, 64, 36, sim::SceneStyle::kOutdoor)), 0.1, 10.0));

    std::ofstream odd(dir.path() / "odd.lxrw", std::ios::binary);
    const std::uint32_t header[] = {1, 5, 4};
    odd.write("LXRW", 4);
    odd.write(reinterpret_cast<const char*>(header), sizeof(header));
    const float values[21] = {};  // black level + 5x4 mosaic
    odd.write(reinterpret_cast<const char*>(values), sizeof(values));
  }
};

struct Running {
  Assets assets;
  service::TuningService svc;
  int port;
  httplib::Client client;

  Running()
      : svc([this] {
          service::ServiceOptions o;
          o.assets_dir = assets.dir.path();
          o.port = 0;
          return o;
        }()),
        port(svc.start()),
        client("127.0.0.1", port) {}
  ~Running() { svc.stop(); }

  httplib::Result open(const std::string& ckpt, const std::string& image) {
    return client.Post("/sessions", json{{"checkpoint", ckpt}, {"image", image}}.dump(),
                       "application/json");
  }
  std::string session(const std::string& ckpt, const std::string& image = "dark.lxrw") {
    auto r = open(ckpt, image);
    REQUIRE(r);
    REQUIRE(r->status == 201);
    return json::parse(r->body)["session_id"];
  }
};

Image png_of(const httplib::Result& r) {
  REQUIRE(r);
  REQUIRE(r->status == 200);
  return decode_png(std::vector<std::uint8_t>(r->body.begin(), r->body.end()));
}

}  // namespace

TEST_SUITE("service") {

TEST_CASE("health reports an idle service") {
  Running s;
  auto r = s.client.Get("/healthz");
  REQUIRE(r);
  CHECK(r->status == 200);
  const auto body = json::parse(r->body);
  CHECK(body["status"] == "ok");
  CHECK(body["sessions"] == 0);
}

TEST_CASE("creating a session returns anchors and bounds") {
  Running s;
  auto r = s.open("cont.lxck", "dark.lxrw");
  REQUIRE(r);
  CHECK(r->status == 201);
  const auto body = json::parse(r->body);
  CHECK(body["session_id"].is_string());
  REQUIRE(body["trained_anchors"].size() == 2);
  CHECK(body["trained_anchors"][0]["alpha1"] == 10.0);
  CHECK(body["trained_anchors"][1]["alpha2"] == 1.0);
  CHECK(body["knob_bounds"]["alpha1"][1] == 100.0);
  CHECK(body["knob_bounds"]["alpha2"][0] == 0.0);
  CHECK(body["packed_size"][0] == 32);
  CHECK(json::parse(s.client.Get("/healthz")->body)["sessions"] == 1);
}

TEST_CASE("unknown or escaping asset names are not found") {
  Running s;
  auto missing = s.open("cont.lxck", "nothere.lxrw");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  auto escape = s.open("../cont.lxck", "dark.lxrw");
  REQUIRE(escape);
  CHECK(escape->status == 404);
  auto bad_session = s.client.Get("/sessions/s999/preview");
  REQUIRE(bad_session);
  CHECK(bad_session->status == 404);
  CHECK(json::parse(bad_session->body).contains("error"));
}

TEST_CASE("malformed bodies and odd images are rejected") {
  Running s;
  auto r = s.client.Post("/sessions", "{\"checkpoint\": 3}", "application/json");
  REQUIRE(r);
  CHECK(r->status == 400);
  auto odd = s.open("cont.lxck", "odd.lxrw");
  REQUIRE(odd);
  CHECK(odd->status == 422);
}

TEST_CASE("out-of-range knobs cite the bound") {
  Running s;
  const std::string id = s.session("cont.lxck");
  auto r = s.client.Get("/sessions/" + id + "/preview?alpha1=500&alpha2=0.5");
  REQUIRE(r);
  CHECK(r->status == 400);
  CHECK(json::parse(r->body)["error"].get<std::string>().find("100") != std::string::npos);
  auto neg = s.client.Get("/sessions/" + id + "/preview?alpha1=10&alpha2=1.2");
  REQUIRE(neg);
  CHECK(neg->status == 400);
  auto scale = s.client.Get("/sessions/" + id + "/preview?scale=1.5");
  REQUIRE(scale);
  CHECK(scale->status == 400);
}

TEST_CASE("alpha2 = 0 renders exactly like the base checkpoint") {
  Running s;
  const std::string base = s.session("base.lxck");
  const std::string cont = s.session("cont.lxck");
  const std::string q = "/preview?alpha1=20&alpha2=0&scale=1";
  auto a = s.client.Get("/sessions/" + base + q);
  auto b = s.client.Get("/sessions/" + cont + q);
  REQUIRE(a);
  REQUIRE(b);
  CHECK(a->status == 200);
  CHECK(a->get_header_value("Content-Type") == "image/png");
  CHECK(a->body == b->body);
  auto c = s.client.Get("/sessions/" + cont + "/preview?alpha1=20&alpha2=1&scale=1");
  REQUIRE(c);
  CHECK(c->body != a->body);
}

TEST_CASE("renders are deterministic and report their latency") {
  Running s;
  const std::string id = s.session("cont.lxck");
  auto a = s.client.Get("/sessions/" + id + "/preview?alpha1=30&alpha2=0.4");
  auto b = s.client.Get("/sessions/" + id + "/preview?alpha1=30&alpha2=0.4");
  REQUIRE(a);
  REQUIRE(b);
  CHECK(a->body == b->body);
  REQUIRE(a->has_header("X-Render-Latency-Ms"));
  const double ms = std::stod(a->get_header_value("X-Render-Latency-Ms"));
  CHECK(ms >= 0.0);
  WARN(ms <= 200.0);
  CHECK(a->get_header_value("Cache-Control") == "no-store");
}

TEST_CASE("export is full resolution and previews downscale it") {
  Running s;
  const std::string id = s.session("cont.lxck");
  const Image full = png_of(s.client.Get("/sessions/" + id + "/export?alpha1=15&alpha2=0.5"));
  CHECK(full.channels == 3);
  CHECK(full.height == 64);
  CHECK(full.width == 64);
  const Image same = png_of(s.client.Get("/sessions/" + id + "/preview?alpha1=15&alpha2=0.5&scale=1"));
  CHECK(same.pixels == full.pixels);
  const Image half = png_of(s.client.Get("/sessions/" + id + "/preview?alpha1=15&alpha2=0.5&scale=2"));
  CHECK(half.height == 32);
  CHECK(half.width == 32);
  // Default scale is 2.
  const Image dflt = png_of(s.client.Get("/sessions/" + id + "/preview?alpha1=15&alpha2=0.5"));
  CHECK(dflt.pixels == half.pixels);
  // Missing knobs fall back to the first trained anchor.
  const Image anchor = png_of(s.client.Get("/sessions/" + id + "/export"));
  const Image explicit_anchor =
      png_of(s.client.Get("/sessions/" + id + "/export?alpha1=10&alpha2=0"));
  CHECK(anchor.pixels == explicit_anchor.pixels);
}

TEST_CASE("non-square previews crop to the network multiple") {
  Running s;
  const std::string id = s.session("cont.lxck", "wide.lxrw");
  const Image half = png_of(s.client.Get("/sessions/" + id + "/preview?scale=2"));
  // 64x36 mosaic -> 32x18 packed -> 16x9 downscaled -> 16x8 cropped -> 32x16 rendered.
  CHECK(half.width == 32);
  CHECK(half.height == 16);
}

TEST_CASE("preview_input box-filters the amplified planes") {
  raw::PackedRaw p;
  p.planes = engine::Tensor({1, 4, 4, 4});
  auto d = p.planes.mutable_data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = 0.001f * static_cast<float>(i % 16);
  const auto t = service::preview_input(p, 10.0, 2, 1);
  REQUIRE(t.shape() == engine::Shape{1, 4, 2, 2});
  // Top-left block of plane 0 holds 0, 1, 4, 5 (x 0.001), amplified by 10.
  CHECK(t.at(0, 0, 0, 0) == doctest::Approx(0.025).epsilon(1e-5));
  CHECK_THROWS_AS(service::preview_input(p, 10.0, 8, 1), lowlight::Error);
}

}  // TEST_SUITE service
