#include "lowlight/service.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <mutex>
#include <optional>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "lowlight/checkpoint.hpp"
#include "lowlight/dataset.hpp"
#include "lowlight/error.hpp"
#include "lowlight/image_io.hpp"

namespace lowlight::service {

namespace fs = std::filesystem;
using json = nlohmann::json;

engine::Tensor preview_input(const raw::PackedRaw& packed, double alpha1, int scale,
                             int multiple) {
  if (scale < 1) throw Error(ErrorKind::kInvalidArgument, "scale must be >= 1");
  const raw::PackedRaw amplified = raw::apply_brightness(packed, alpha1);
  Image planes = to_image(amplified.planes);
  // Trim to a multiple of the scale before averaging.
  planes = center_crop(planes, planes.height - planes.height % scale,
                       planes.width - planes.width % scale);
  planes = box_downscale(planes, scale);
  const int h = planes.height - planes.height % multiple;
  const int w = planes.width - planes.width % multiple;
  if (h == 0 || w == 0) {
    throw Error(ErrorKind::kInvalidArgument,
                "scale " + std::to_string(scale) + " leaves less than " +
                    std::to_string(multiple) + " packed pixels per side");
  }
  return to_tensor(center_crop(planes, h, w));
}

namespace {

struct Session {
  std::string id;
  std::string checkpoint;
  std::string image;
  std::shared_ptr<const model::ModelWeights> model;
  raw::PackedRaw packed;
  std::mutex render_mutex;  // one render at a time per session
  std::optional<raw::TuningKnobs> last_rendered;
};

void send_error(httplib::Response& res, int status, const std::string& message) {
  res.status = status;
  res.set_content(json{{"error", message}}.dump(), "application/json");
}

std::optional<double> query_double(const httplib::Request& req, const std::string& key) {
  if (!req.has_param(key)) return std::nullopt;
  const std::string text = req.get_param_value(key);
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::kInvalidArgument, key + "='" + text + "' is not a number");
  }
}

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNotFound: return 404;
    case ErrorKind::kInvalidArgument: return 400;
    case ErrorKind::kShapeMismatch: return 422;
    case ErrorKind::kFormat: return 422;
    default: return 500;
  }
}

}  // namespace

struct TuningService::Impl {
  ServiceOptions options;
  raw::KnobBounds bounds;
  httplib::Server server;
  std::thread thread;
  std::atomic<int> bound_port{0};

  std::mutex mutex;  // guards sessions, models and next_id
  std::map<std::string, std::shared_ptr<Session>> sessions;
  std::map<std::string, std::shared_ptr<const model::ModelWeights>> models;
  std::uint64_t next_id = 1;

  explicit Impl(ServiceOptions o)
      : options(std::move(o)),
        bounds(options.extrapolate ? raw::KnobBounds::extrapolating()
                                   : raw::KnobBounds::standard()) {
    routes();
  }

  // Resolves a bare file name inside the assets directory.
  fs::path asset(const std::string& name, const char* what) const {
    const fs::path p(name);
    if (name.empty() || p.has_parent_path() || p.is_absolute() || name == "." || name == "..") {
      throw Error(ErrorKind::kNotFound, std::string(what) + " '" + name + "' is not an allowed asset");
    }
    const fs::path full = options.assets_dir / p;
    if (!fs::is_regular_file(full)) {
      throw Error(ErrorKind::kNotFound, std::string(what) + " '" + name + "' not found");
    }
    return full;
  }

  std::shared_ptr<const model::ModelWeights> load_model(const std::string& name) {
    {
      std::lock_guard lock(mutex);
      if (auto it = models.find(name); it != models.end()) return it->second;
    }
    auto m = std::make_shared<const model::ModelWeights>(
        model::load_checkpoint(asset(name, "checkpoint")));
    std::lock_guard lock(mutex);
    return models.emplace(name, std::move(m)).first->second;
  }

  std::shared_ptr<Session> find(const std::string& id) {
    std::lock_guard lock(mutex);
    auto it = sessions.find(id);
    if (it == sessions.end()) throw Error(ErrorKind::kNotFound, "no session '" + id + "'");
    return it->second;
  }

  raw::TuningKnobs knobs(const httplib::Request& req, const Session& s) const {
    raw::TuningKnobs k;
    const auto& anchor = s.model->anchors.empty() ? model::Anchor{} : s.model->anchors.front();
    k.alpha1 = query_double(req, "alpha1").value_or(anchor.alpha1);
    k.alpha2 = query_double(req, "alpha2").value_or(anchor.alpha2);
    return k;
  }

  template <typename F>
  void guarded(httplib::Response& res, F&& body) {
    try {
      body();
    } catch (const Error& e) {
      send_error(res, http_status(e.kind()), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, std::string("bad JSON: ") + e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  }

  void create_session(const httplib::Request& req, httplib::Response& res) {
    const json body = json::parse(req.body);
    if (!body.is_object() || !body.contains("checkpoint") || !body.contains("image") ||
        !body["checkpoint"].is_string() || !body["image"].is_string()) {
      throw Error(ErrorKind::kInvalidArgument,
                  "expected {\"checkpoint\": <name>, \"image\": <name>}");
    }
    const std::string ckpt = body["checkpoint"];
    const std::string image = body["image"];
    const fs::path image_path = asset(image, "image");
    auto m = load_model(ckpt);

    raw::RawImage raw_image = sim::read_raw(image_path);
    if (raw_image.width % 2 != 0 || raw_image.height % 2 != 0) {
      throw ShapeError("image " + image + " is " + std::to_string(raw_image.width) + "x" +
                       std::to_string(raw_image.height) + "; both extents must be even");
    }
    auto s = std::make_shared<Session>();
    s->checkpoint = ckpt;
    s->image = image;
    s->model = m;
    s->packed = raw::pack_bayer(raw_image);
    if (m->config.in_channels != 4) {
      throw ShapeError("checkpoint " + ckpt + " expects " + std::to_string(m->config.in_channels) +
                       " input channels, packed raw has 4");
    }
    try {
      model::check_input_extent(m->config, s->packed.planes.dim(2), s->packed.planes.dim(3));
    } catch (const Error& e) {
      throw ShapeError("image " + image + " does not fit checkpoint " + ckpt + ": " + e.what());
    }
    {
      std::lock_guard lock(mutex);
      s->id = "s" + std::to_string(next_id++);
      sessions.emplace(s->id, s);
    }
    json anchors = json::array();
    for (const auto& a : m->anchors) {
      anchors.push_back({{"alpha1", a.alpha1}, {"alpha2", a.alpha2}, {"exposure", a.exposure}});
    }
    json out = {
        {"session_id", s->id},
        {"trained_anchors", anchors},
        {"knob_bounds",
         {{"alpha1", {bounds.alpha1_min, bounds.alpha1_max}},
          {"alpha2", {bounds.alpha2_min, bounds.alpha2_max}}}},
        {"packed_size", {s->packed.height(), s->packed.width()}},
    };
    res.status = 201;
    res.set_content(out.dump(), "application/json");
  }

  void render(const httplib::Request& req, httplib::Response& res, bool full) {
    auto s = find(req.path_params.at("id"));
    const raw::TuningKnobs k = knobs(req, *s);
    if (const std::string v = bounds.violation(k); !v.empty()) {
      send_error(res, 400, v);
      return;
    }
    int scale = 1;
    if (!full) {
      const double sv = query_double(req, "scale").value_or(options.default_scale);
      if (sv < 1 || sv != std::floor(sv) || sv > 64) {
        throw Error(ErrorKind::kInvalidArgument, "scale must be an integer in [1, 64]");
      }
      scale = static_cast<int>(sv);
    }
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::uint8_t> png;
    {
      std::lock_guard lock(s->render_mutex);
      const engine::Tensor input =
          preview_input(s->packed, k.alpha1, scale, s->model->config.spatial_multiple());
      png = encode_png(model::render(*s->model, input, k.alpha2));
      s->last_rendered = k;
    }
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    char latency[32];
    std::snprintf(latency, sizeof(latency), "%.3f", ms);
    res.set_header("X-Render-Latency-Ms", latency);
    res.set_header("Cache-Control", "no-store");
    res.set_content(std::string(png.begin(), png.end()), "image/png");
  }

  void routes() {
    server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
      std::lock_guard lock(mutex);
      json out = {{"status", "ok"},
                  {"sessions", sessions.size()},
                  {"models_loaded", models.size()},
                  {"extrapolate", options.extrapolate}};
      res.set_content(out.dump(), "application/json");
    });
    server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { create_session(req, res); });
    });
    server.Get("/sessions/:id/preview", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { render(req, res, false); });
    });
    server.Get("/sessions/:id/export", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { render(req, res, true); });
    });
  }

  bool bind() {
    if (options.port == 0) {
      const int p = server.bind_to_any_port(options.host);
      if (p <= 0) return false;
      bound_port = p;
      return true;
    }
    if (!server.bind_to_port(options.host, options.port)) return false;
    bound_port = options.port;
    return true;
  }
};

TuningService::TuningService(ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(options))) {
  if (!fs::is_directory(impl_->options.assets_dir)) {
    throw IoError(impl_->options.assets_dir.string(), "assets directory does not exist");
  }
  if (impl_->options.default_scale < 1) {
    throw Error(ErrorKind::kInvalidArgument, "default preview scale must be >= 1");
  }
}

TuningService::~TuningService() { stop(); }

bool TuningService::run() {
  if (!impl_->bind()) return false;
  return impl_->server.listen_after_bind();
}

int TuningService::start() {
  if (!impl_->bind()) {
    throw IoError(impl_->options.host + ":" + std::to_string(impl_->options.port),
                  "cannot bind");
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->bound_port;
}

void TuningService::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int TuningService::port() const { return impl_->bound_port; }

const raw::KnobBounds& TuningService::bounds() const { return impl_->bounds; }

}  // namespace lowlight::service
