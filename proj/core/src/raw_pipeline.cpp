#include "lowlight/raw_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lowlight/error.hpp"
#include "lowlight/image.hpp"

namespace lowlight::raw {

namespace {

// Offsets of (R, G1, B, G2) inside an RGGB quad.
constexpr int kQuadY[4] = {0, 0, 1, 1};
constexpr int kQuadX[4] = {0, 1, 1, 0};

}  // namespace

void RawImage::validate() const {
  if (width <= 0 || height <= 0 || width % 2 != 0 || height % 2 != 0) {
    throw Error(ErrorKind::kInvalidArgument,
                "raw image: dimensions must be positive and even, got " +
                    std::to_string(width) + "x" + std::to_string(height));
  }
  if (mosaic.size() != static_cast<std::size_t>(width) * height) {
    throw ShapeError("raw image: mosaic holds " + std::to_string(mosaic.size()) +
                     " values for " + std::to_string(width) + "x" +
                     std::to_string(height));
  }
  if (!(black_level >= 0.0f && black_level < 1.0f)) {
    throw Error(ErrorKind::kInvalidArgument,
                "raw image: black level must lie in [0, 1)");
  }
}

std::string KnobBounds::violation(const TuningKnobs& knobs) const {
  std::ostringstream os;
  if (!std::isfinite(knobs.alpha1) || knobs.alpha1 < alpha1_min ||
      knobs.alpha1 > alpha1_max) {
    os << "alpha1=" << knobs.alpha1 << " outside [" << alpha1_min << ", "
       << alpha1_max << "]; brightness ratios are truncated at "
       << kMaxExposureRatio;
  } else if (!std::isfinite(knobs.alpha2) || knobs.alpha2 < alpha2_min ||
             knobs.alpha2 > alpha2_max) {
    os << "alpha2=" << knobs.alpha2 << " outside [" << alpha2_min << ", "
       << alpha2_max << "]";
  }
  return os.str();
}

PackedRaw pack_bayer(const RawImage& raw) {
  raw.validate();
  const int h = raw.height / 2;
  const int w = raw.width / 2;
  engine::Tensor planes({1, 4, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  auto dst = planes.mutable_data();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < 4; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const float v = raw.at(2 * y + kQuadY[c], 2 * x + kQuadX[c]) - raw.black_level;
        dst[c * plane + static_cast<std::size_t>(y) * w + x] = std::max(v, 0.0f);
      }
    }
  }
  return PackedRaw{std::move(planes), raw.width, raw.height, raw.black_level};
}

RawImage unpack_bayer(const PackedRaw& packed) {
  const auto& s = packed.planes.shape();
  if (s.size() != 4 || s[0] != 1 || s[1] != 4) {
    throw ShapeError("unpack_bayer: expected [1,4,H,W] planes, got " +
                     engine::shape_string(s));
  }
  const int h = static_cast<int>(s[2]);
  const int w = static_cast<int>(s[3]);
  RawImage raw(2 * w, 2 * h);
  auto src = packed.planes.data();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int c = 0; c < 4; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        raw.at(2 * y + kQuadY[c], 2 * x + kQuadX[c]) =
            src[c * plane + static_cast<std::size_t>(y) * w + x];
      }
    }
  }
  return raw;
}

PackedRaw apply_brightness(const PackedRaw& packed, double alpha1) {
  if (!(alpha1 > 0.0) || !std::isfinite(alpha1)) {
    throw Error(ErrorKind::kInvalidArgument,
                "apply_brightness: alpha1 must be positive and finite");
  }
  const float gain = static_cast<float>(std::min(alpha1, kMaxExposureRatio));
  PackedRaw out = packed;
  out.planes = engine::Tensor(packed.planes.shape());
  auto src = packed.planes.data();
  auto dst = out.planes.mutable_data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = std::clamp(src[i] * gain, 0.0f, 1.0f);
  }
  return out;
}

double exposure_ratio(double input_exposure, double target_exposure) {
  if (!(input_exposure > 0.0) || !(target_exposure > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument,
                "exposure_ratio: exposure times must be positive");
  }
  return std::min(target_exposure / input_exposure, kMaxExposureRatio);
}

}  // namespace lowlight::raw

namespace lowlight {

engine::Tensor to_tensor(const Image& image) {
  return engine::Tensor({1, static_cast<std::size_t>(image.channels),
                         static_cast<std::size_t>(image.height),
                         static_cast<std::size_t>(image.width)},
                        image.pixels);
}

Image to_image(const engine::Tensor& tensor) {
  const auto& s = tensor.shape();
  if (s.size() != 4 || s[0] != 1) {
    throw ShapeError("to_image: expected [1,C,H,W], got " + engine::shape_string(s));
  }
  Image out(static_cast<int>(s[1]), static_cast<int>(s[2]), static_cast<int>(s[3]));
  std::copy(tensor.data().begin(), tensor.data().end(), out.pixels.begin());
  return out;
}

Image box_downscale(const Image& image, int factor) {
  if (factor < 1 || image.height % factor != 0 || image.width % factor != 0) {
    throw Error(ErrorKind::kInvalidArgument,
                "box_downscale: factor " + std::to_string(factor) +
                    " does not divide " + std::to_string(image.height) + "x" +
                    std::to_string(image.width));
  }
  if (factor == 1) return image;
  Image out(image.channels, image.height / factor, image.width / factor);
  const float norm = 1.0f / static_cast<float>(factor * factor);
  for (int c = 0; c < out.channels; ++c) {
    for (int y = 0; y < out.height; ++y) {
      for (int x = 0; x < out.width; ++x) {
        float s = 0.0f;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) {
            s += image.at(c, y * factor + dy, x * factor + dx);
          }
        }
        out.at(c, y, x) = s * norm;
      }
    }
  }
  return out;
}

Image center_crop(const Image& image, int height, int width) {
  if (height > image.height || width > image.width || height < 0 || width < 0) {
    throw Error(ErrorKind::kInvalidArgument, "center_crop: crop exceeds image");
  }
  const int oy = (image.height - height) / 2;
  const int ox = (image.width - width) / 2;
  Image out(image.channels, height, width);
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) out.at(c, y, x) = image.at(c, y + oy, x + ox);
    }
  }
  return out;
}

}  // namespace lowlight
