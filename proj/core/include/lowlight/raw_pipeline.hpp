#pragma once

#include <string>
#include <vector>

#include "lowlight/tensor.hpp"

namespace lowlight::raw {

// Exposure ratios and brightness gains are truncated to this value.
inline constexpr double kMaxExposureRatio = 100.0;

// Only RGGB is supported; other layouts are rejected at load time.
enum class CfaLayout { kRGGB };

// Single-channel Bayer mosaic of linear intensities normalized so that the
// white point is 1.0. black_level is in the same units.
struct RawImage {
  int width = 0;
  int height = 0;
  std::vector<float> mosaic;
  float black_level = 0.0f;
  CfaLayout cfa = CfaLayout::kRGGB;

  RawImage() = default;
  RawImage(int w, int h, float fill = 0.0f, float black = 0.0f)
      : width(w), height(h),
        mosaic(static_cast<std::size_t>(w) * h, fill), black_level(black) {}

  float& at(int y, int x) { return mosaic[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return mosaic[static_cast<std::size_t>(y) * width + x]; }

  // Throws on odd extents, mismatched storage, or a black level outside [0,1).
  void validate() const;
};

// Packed planes in channel order (R, G1, B, G2), shape [1,4,H/2,W/2].
struct PackedRaw {
  engine::Tensor planes;
  int source_width = 0;
  int source_height = 0;
  float source_black_level = 0.0f;

  int height() const { return static_cast<int>(planes.dim(2)); }
  int width() const { return static_cast<int>(planes.dim(3)); }
};

// Runtime controls: alpha1 is the brightness (exposure) ratio, alpha2 the
// enhancement level.
struct TuningKnobs {
  double alpha1 = 1.0;
  double alpha2 = 0.0;
};

struct KnobBounds {
  double alpha1_min = 1.0;
  double alpha1_max = kMaxExposureRatio;
  double alpha2_min = 0.0;
  double alpha2_max = 1.0;

  static KnobBounds standard() { return {}; }
  // Widened enhancement range for exploring beyond the trained anchors.
  static KnobBounds extrapolating() { return {1.0, kMaxExposureRatio, -0.5, 1.5}; }

  // Empty string when the knobs are legal, otherwise a message naming the
  // violated bound.
  std::string violation(const TuningKnobs& knobs) const;
};

PackedRaw pack_bayer(const RawImage& raw);
RawImage unpack_bayer(const PackedRaw& packed);

// Multiplies by min(alpha1, 100) and clips to [0, 1].
PackedRaw apply_brightness(const PackedRaw& packed, double alpha1);

// target / input, truncated at 100.
double exposure_ratio(double input_exposure, double target_exposure);

}  // namespace lowlight::raw
