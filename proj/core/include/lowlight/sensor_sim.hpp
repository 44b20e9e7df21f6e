#pragma once

#include <cstdint>
#include <string>

#include "lowlight/image.hpp"
#include "lowlight/raw_pipeline.hpp"

namespace lowlight::sim {

// Gains and readout noise in normalized units (white point 1.0).
struct NoiseParams {
  double sigma_r = 2e-3;  // readout standard deviation
  double g_a = 1e-3;      // analog gain
  double g_d = 1.0;       // digital gain

  double beta_read() const { return g_d * g_d * sigma_r * sigma_r; }
  double beta_shot() const { return g_d * g_a; }
  void validate() const;

  // Builds parameters that reproduce the requested variances with g_d = 1.
  static NoiseParams from_betas(double beta_read, double beta_shot);
};

enum class SceneStyle { kIndoor, kOutdoor };

const char* to_string(SceneStyle style);
SceneStyle parse_style(const std::string& text);

// Tone parameters applied after the scene is normalized to [0, 1].
// Indoor scenes are warm and keep a linear tone; outdoor scenes are cooler,
// pushed darker by a steeper power and lit by a few bright point sources.
struct StyleProfile {
  double tone_power;
  double tint[3];
  int point_lights;

  static StyleProfile of(SceneStyle style);
};

// Linear radiance [3,H,W] in [0, 1]; fully determined by (seed, size, style).
struct CleanScene {
  Image radiance;
  std::uint64_t seed = 0;
  SceneStyle style = SceneStyle::kIndoor;
};

CleanScene generate_scene(std::uint64_t seed, int width, int height,
                          SceneStyle style);

// RGGB sampling of the color planes: each site takes its own plane's value.
raw::RawImage mosaic(const CleanScene& scene);

// Scales the signal by exposure / reference and saturates at 1.0.
raw::RawImage expose(const raw::RawImage& signal, double exposure_time,
                     double reference_time);

// y ~ Normal(x, beta_read + beta_shot * x) per site, then clamped to [0, 1]
// unless clamp is false. Deterministic in rng_seed.
raw::RawImage sample_noisy_raw(const raw::RawImage& signal,
                               const NoiseParams& params,
                               std::uint64_t rng_seed, bool clamp = true);

// Adds the sensor pedestal and clamps to the [0, 1] ADC range.
raw::RawImage add_black_level(const raw::RawImage& noisy, float black_level);

inline constexpr double kDisplayGamma = 2.2;

float encode_gamma(float linear);

// Gamma-encoded clean radiance (the ground-truth rendering at the reference
// exposure).
Image render_reference_srgb(const CleanScene& scene);

// Rendering of the scene as exposed for exposure_time seconds.
Image render_exposure_srgb(const CleanScene& scene, double exposure_time,
                           double reference_time);

}  // namespace lowlight::sim
