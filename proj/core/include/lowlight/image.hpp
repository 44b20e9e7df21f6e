#pragma once

#include <cstddef>
#include <vector>

#include "lowlight/tensor.hpp"

namespace lowlight {

// Planar (CHW) float image. sRGB outputs use three channels in [0, 1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w),
        pixels(static_cast<std::size_t>(c) * h * w, fill) {}

  float& at(int c, int y, int x) {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

// [1,C,H,W] <-> Image
engine::Tensor to_tensor(const Image& image);
Image to_image(const engine::Tensor& tensor);

// Mean over S x S blocks; extents must be divisible by the factor.
Image box_downscale(const Image& image, int factor);
Image center_crop(const Image& image, int height, int width);

}  // namespace lowlight
