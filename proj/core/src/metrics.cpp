#include "lowlight/metrics.hpp"

#include <cmath>
#include <vector>

#include "lowlight/error.hpp"
#include "lowlight/sensor_sim.hpp"

namespace lowlight::eval {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": images differ in shape (" +
                     std::to_string(a.channels) + "x" + std::to_string(a.height) + "x" +
                     std::to_string(a.width) + " vs " + std::to_string(b.channels) + "x" +
                     std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
  }
}

std::vector<double> gaussian_taps(int window, double sigma) {
  std::vector<double> taps(static_cast<std::size_t>(window));
  const double center = (window - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - center;
    taps[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += taps[static_cast<std::size_t>(i)];
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

// Separable valid-mode filtering of a single plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w,
                                 const std::vector<double>& taps) {
  const int k = static_cast<int>(taps.size());
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += taps[i] * plane[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += taps[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  if (a.pixels.empty()) throw Error(ErrorKind::kInvalidArgument, "psnr: empty image");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(a.pixels.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

Image luminance(const Image& image) {
  if (image.channels == 1) return image;
  if (image.channels != 3) {
    throw ShapeError("luminance: expected 1 or 3 channels, got " + std::to_string(image.channels));
  }
  Image y(1, image.height, image.width);
  const std::size_t n = image.plane_size();
  for (std::size_t i = 0; i < n; ++i) {
    y.pixels[i] = static_cast<float>(0.299 * image.pixels[i] + 0.587 * image.pixels[n + i] +
                                     0.114 * image.pixels[2 * n + i]);
  }
  return y;
}

double ssim(const Image& a, const Image& b, const SsimOptions& o) {
  require_same_shape(a, b, "ssim");
  if (a.height < o.window || a.width < o.window) {
    throw Error(ErrorKind::kInvalidArgument,
                "ssim: image " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                    " is smaller than the " + std::to_string(o.window) + "x" +
                    std::to_string(o.window) + " window");
  }
  const Image ya = luminance(a);
  const Image yb = luminance(b);
  const int h = ya.height, w = ya.width;
  const std::size_t n = ya.plane_size();
  std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
  for (std::size_t i = 0; i < n; ++i) {
    pa[i] = ya.pixels[i];
    pb[i] = yb.pixels[i];
    paa[i] = pa[i] * pa[i];
    pbb[i] = pb[i] * pb[i];
    pab[i] = pa[i] * pb[i];
  }
  const auto taps = gaussian_taps(o.window, o.sigma);
  const auto mu_a = filter_valid(pa, h, w, taps);
  const auto mu_b = filter_valid(pb, h, w, taps);
  const auto e_aa = filter_valid(paa, h, w, taps);
  const auto e_bb = filter_valid(pbb, h, w, taps);
  const auto e_ab = filter_valid(pab, h, w, taps);
  const double c1 = (o.k1 * o.dynamic_range) * (o.k1 * o.dynamic_range);
  const double c2 = (o.k2 * o.dynamic_range) * (o.k2 * o.dynamic_range);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

Image bilinear_demosaic(const raw::RawImage& mosaic) {
  mosaic.validate();
  const int h = mosaic.height, w = mosaic.width;
  auto color_at = [](int y, int x) {
    return (y % 2 == 0) ? (x % 2 == 0 ? 0 : 1) : (x % 2 == 0 ? 1 : 2);
  };
  // Bilinear weights over the 3x3 neighbourhood of same-colour sites,
  // renormalized at the borders.
  static constexpr double kRb[3][3] = {{1, 2, 1}, {2, 4, 2}, {1, 2, 1}};
  static constexpr double kG[3][3] = {{0, 1, 0}, {1, 4, 1}, {0, 1, 0}};
  Image out(3, h, w);
  for (int c = 0; c < 3; ++c) {
    const auto& k = (c == 1) ? kG : kRb;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (color_at(y, x) == c) {
          out.at(c, y, x) = mosaic.at(y, x);
          continue;
        }
        double sum = 0.0, wsum = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w || color_at(yy, xx) != c) continue;
            sum += k[dy + 1][dx + 1] * mosaic.at(yy, xx);
            wsum += k[dy + 1][dx + 1];
          }
        }
        out.at(c, y, x) = static_cast<float>(wsum > 0.0 ? sum / wsum : 0.0);
      }
    }
  }
  return out;
}

Image brightness_only_baseline(const raw::PackedRaw& packed, double alpha1) {
  const raw::PackedRaw amplified = raw::apply_brightness(packed, alpha1);
  Image rgb = bilinear_demosaic(raw::unpack_bayer(amplified));
  for (auto& v : rgb.pixels) v = sim::encode_gamma(v);
  return rgb;
}

}  // namespace lowlight::eval
