#include "lowlight/sensor_sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "lowlight/error.hpp"

namespace lowlight::sim {

void NoiseParams::validate() const {
  // g_a = 0 is allowed and means a shot-noise-free sensor.
  if (!(sigma_r >= 0.0) || !(g_a >= 0.0) || !(g_d > 0.0) || !std::isfinite(sigma_r) ||
      !std::isfinite(g_a) || !std::isfinite(g_d)) {
    throw Error(ErrorKind::kInvalidArgument,
                "noise params: need sigma_r >= 0, g_a >= 0 and g_d > 0");
  }
}

NoiseParams NoiseParams::from_betas(double beta_read, double beta_shot) {
  if (!(beta_read >= 0.0) || !(beta_shot >= 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "noise params: variances must be >= 0");
  }
  return NoiseParams{std::sqrt(beta_read), beta_shot, 1.0};
}

const char* to_string(SceneStyle style) {
  return style == SceneStyle::kIndoor ? "indoor" : "outdoor";
}

SceneStyle parse_style(const std::string& text) {
  if (text == "indoor") return SceneStyle::kIndoor;
  if (text == "outdoor") return SceneStyle::kOutdoor;
  throw Error(ErrorKind::kInvalidArgument, "unknown scene style '" + text + "'");
}

StyleProfile StyleProfile::of(SceneStyle style) {
  if (style == SceneStyle::kIndoor) return {1.0, {1.0, 0.92, 0.78}, 0};
  return {1.8, {0.82, 0.92, 1.0}, 3};
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

struct Rgb {
  double v[3];
};

Rgb random_color(Rng& rng) {
  return {{uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0)}};
}

struct Shape2d {
  enum Kind { kRect, kEllipse } kind;
  double cx, cy, rx, ry, angle;
  Rgb color;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (c * dx + s * dy) / rx;
    const double v = (-s * dx + c * dy) / ry;
    return kind == kRect ? (std::fabs(u) <= 1.0 && std::fabs(v) <= 1.0)
                         : (u * u + v * v <= 1.0);
  }
};

Shape2d random_shape(Rng& rng) {
  Shape2d s{};
  s.kind = uniform(rng, 0.0, 1.0) < 0.5 ? Shape2d::kRect : Shape2d::kEllipse;
  s.cx = uniform(rng, 0.0, 1.0);
  s.cy = uniform(rng, 0.0, 1.0);
  s.rx = uniform(rng, 0.04, 0.25);
  s.ry = uniform(rng, 0.04, 0.25);
  s.angle = uniform(rng, 0.0, std::numbers::pi);
  s.color = random_color(rng);
  return s;
}

}  // namespace

CleanScene generate_scene(std::uint64_t seed, int width, int height,
                          SceneStyle style) {
  if (width <= 0 || height <= 0 || width % 2 != 0 || height % 2 != 0) {
    throw Error(ErrorKind::kInvalidArgument,
                "generate_scene: dimensions must be positive and even");
  }
  Rng rng(seed);
  const StyleProfile profile = StyleProfile::of(style);

  // Smooth background gradient between two colors.
  const Rgb c0 = random_color(rng);
  const Rgb c1 = random_color(rng);
  const double dir = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double gx = std::cos(dir), gy = std::sin(dir);

  std::vector<Shape2d> shapes(static_cast<std::size_t>(
      std::uniform_int_distribution<int>(6, 12)(rng)));
  for (auto& s : shapes) s = random_shape(rng);

  // Band-limited multiplicative texture.
  struct Wave { double fx, fy, phase, amp; };
  std::array<Wave, 4> waves{};
  for (auto& w : waves) {
    const double f = uniform(rng, 2.0, 12.0);
    const double a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    w = {f * std::cos(a), f * std::sin(a), uniform(rng, 0.0, 2.0 * std::numbers::pi),
         uniform(rng, 0.02, 0.06)};
  }

  // Shadowed regions.
  const int shadow_count = std::uniform_int_distribution<int>(1, 2)(rng);
  std::vector<std::pair<Shape2d, double>> shadows;
  for (int i = 0; i < shadow_count; ++i) {
    Shape2d s = random_shape(rng);
    s.kind = Shape2d::kEllipse;
    s.rx *= 1.6;
    s.ry *= 1.6;
    shadows.emplace_back(s, uniform(rng, 0.08, 0.3));
  }

  struct Light { double x, y, radius, power; };
  std::vector<Light> lights(static_cast<std::size_t>(profile.point_lights));
  for (auto& l : lights) {
    l = {uniform(rng, 0.1, 0.9), uniform(rng, 0.1, 0.9), uniform(rng, 0.02, 0.06),
         uniform(rng, 1.0, 2.0)};
  }

  Image img(3, height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double u = (x + 0.5) / width;
      const double v = (y + 0.5) / height;
      const double t = std::clamp(0.5 + 0.7 * ((u - 0.5) * gx + (v - 0.5) * gy), 0.0, 1.0);
      Rgb px{};
      for (int c = 0; c < 3; ++c) px.v[c] = (1.0 - t) * c0.v[c] + t * c1.v[c];
      for (const auto& s : shapes) {
        if (s.contains(u, v)) px = s.color;
      }
      double tex = 1.0;
      for (const auto& w : waves) {
        tex += w.amp * std::sin(2.0 * std::numbers::pi * (w.fx * u + w.fy * v) + w.phase);
      }
      double shade = 1.0;
      for (const auto& [s, level] : shadows) {
        if (s.contains(u, v)) shade *= level;
      }
      double glow = 0.0;
      for (const auto& l : lights) {
        const double d2 = (u - l.x) * (u - l.x) + (v - l.y) * (v - l.y);
        glow += l.power * std::exp(-d2 / (2.0 * l.radius * l.radius));
      }
      for (int c = 0; c < 3; ++c) {
        img.at(c, y, x) = static_cast<float>(px.v[c] * tex * shade + glow);
      }
    }
  }

  // Stretch to the full [0, 1] range, then apply the style's tone and tint.
  const auto [lo_it, hi_it] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  const float lo = *lo_it;
  const float span = std::max(*hi_it - lo, 1e-6f);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const double n = (img.at(c, y, x) - lo) / span;
        img.at(c, y, x) = static_cast<float>(
            std::clamp(std::pow(n, profile.tone_power) * profile.tint[c], 0.0, 1.0));
      }
    }
  }
  return CleanScene{std::move(img), seed, style};
}

raw::RawImage mosaic(const CleanScene& scene) {
  const Image& r = scene.radiance;
  if (r.channels != 3) throw ShapeError("mosaic: scene must have 3 planes");
  raw::RawImage out(r.width, r.height);
  for (int y = 0; y < r.height; ++y) {
    for (int x = 0; x < r.width; ++x) {
      // RGGB: R at (even, even), B at (odd, odd), G elsewhere.
      const int plane = (y % 2 == 0) ? (x % 2 == 0 ? 0 : 1) : (x % 2 == 0 ? 1 : 2);
      out.at(y, x) = r.at(plane, y, x);
    }
  }
  return out;
}

raw::RawImage expose(const raw::RawImage& signal, double exposure_time,
                     double reference_time) {
  if (!(exposure_time > 0.0) || !(reference_time > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "expose: times must be positive");
  }
  raw::RawImage out = signal;
  const double scale = exposure_time / reference_time;
  for (auto& v : out.mosaic) {
    v = static_cast<float>(std::min(static_cast<double>(v) * scale, 1.0));
  }
  return out;
}

raw::RawImage sample_noisy_raw(const raw::RawImage& signal,
                               const NoiseParams& params,
                               std::uint64_t rng_seed, bool clamp) {
  params.validate();
  const double beta_read = params.beta_read();
  const double beta_shot = params.beta_shot();
  raw::RawImage out = signal;
  if (beta_read == 0.0 && beta_shot == 0.0) return out;
  Rng rng(rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : out.mosaic) {
    const double x = v;
    const double variance = beta_read + beta_shot * x;
    if (variance < 0.0) {
      throw Error(ErrorKind::kNumeric, "sample_noisy_raw: negative variance at x=" +
                                           std::to_string(x));
    }
    double y = x + std::sqrt(variance) * normal(rng);
    if (clamp) y = std::clamp(y, 0.0, 1.0);
    v = static_cast<float>(y);
  }
  return out;
}

raw::RawImage add_black_level(const raw::RawImage& noisy, float black_level) {
  raw::RawImage out = noisy;
  out.black_level = black_level;
  for (auto& v : out.mosaic) v = std::clamp(v + black_level, 0.0f, 1.0f);
  return out;
}

float encode_gamma(float linear) {
  const double v = std::clamp(static_cast<double>(linear), 0.0, 1.0);
  return static_cast<float>(std::pow(v, 1.0 / kDisplayGamma));
}

Image render_reference_srgb(const CleanScene& scene) {
  Image out = scene.radiance;
  for (auto& v : out.pixels) v = encode_gamma(v);
  return out;
}

Image render_exposure_srgb(const CleanScene& scene, double exposure_time,
                           double reference_time) {
  if (!(exposure_time > 0.0) || !(reference_time > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument,
                "render_exposure_srgb: times must be positive");
  }
  const double scale = exposure_time / reference_time;
  Image out = scene.radiance;
  for (auto& v : out.pixels) {
    v = encode_gamma(static_cast<float>(std::min(v * scale, 1.0)));
  }
  return out;
}

}  // namespace lowlight::sim
