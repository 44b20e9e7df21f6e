#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "lowlight/model.hpp"
#include "lowlight/raw_pipeline.hpp"

namespace lowlight::service {

struct ServiceOptions {
  std::filesystem::path assets_dir;  // checkpoints and raw images are resolved here
  std::string host = "127.0.0.1";
  int port = 8080;                   // 0 picks a free port
  bool extrapolate = false;          // widen alpha2 to [-0.5, 1.5]
  int default_scale = 2;
};

// Preview input: amplify by alpha1, box-downscale the packed planes by
// scale, then center-crop both extents down to a multiple of `multiple`.
engine::Tensor preview_input(const raw::PackedRaw& packed, double alpha1, int scale,
                             int multiple);

// Local HTTP service for interactive knob exploration.
//
//   POST /sessions                  {"checkpoint": name, "image": name}
//   GET  /sessions/{id}/preview     ?alpha1=&alpha2=&scale=   -> image/png
//   GET  /sessions/{id}/export      ?alpha1=&alpha2=          -> image/png
//   GET  /healthz
//
// Asset names are file names inside assets_dir; anything else is refused.
// Each preview response carries X-Render-Latency-Ms.
class TuningService {
 public:
  explicit TuningService(ServiceOptions options);
  ~TuningService();
  TuningService(const TuningService&) = delete;
  TuningService& operator=(const TuningService&) = delete;

  // Binds and serves until stop(); returns false if the bind failed.
  bool run();
  // Binds, serves on a background thread, and returns the bound port.
  int start();
  void stop();

  int port() const;
  const raw::KnobBounds& bounds() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lowlight::service
