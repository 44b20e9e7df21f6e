#pragma once

// Straightforward reference implementations written from the definitions,
// sharing no code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "lowlight/image.hpp"
#include "lowlight/tensor.hpp"

namespace lowlight::testing {

inline engine::Tensor random_tensor(engine::Shape shape, std::uint64_t seed, float lo = -1.0f,
                                    float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  engine::Tensor t(shape);
  for (auto& v : t.mutable_data()) v = u(rng);
  return t;
}

// Values bounded away from zero so a small step never crosses a kink.
inline engine::Tensor random_away_from_zero(engine::Shape shape, std::uint64_t seed,
                                            float gap = 0.05f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(gap, 1.0f);
  std::bernoulli_distribution coin(0.5);
  engine::Tensor t(shape);
  for (auto& v : t.mutable_data()) v = coin(rng) ? u(rng) : -u(rng);
  return t;
}

// Distinct values on a grid of the given spacing, randomly permuted.
inline engine::Tensor random_distinct(engine::Shape shape, std::uint64_t seed,
                                      float spacing = 0.01f) {
  engine::Tensor t(shape);
  auto d = t.mutable_data();
  std::vector<float> values(d.size());
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = spacing * static_cast<float>(i);
  std::mt19937_64 rng(seed);
  std::shuffle(values.begin(), values.end(), rng);
  std::copy(values.begin(), values.end(), d.begin());
  return t;
}

// Cross-correlation by the textbook loop nest, in double.
inline std::vector<double> conv2d_oracle(const engine::Tensor& input, const engine::Tensor& kernel,
                                         const engine::Tensor& bias, int stride, int pad,
                                         std::size_t& out_h, std::size_t& out_w) {
  const auto& is = input.shape();
  const auto& ks = kernel.shape();
  const long n = static_cast<long>(is[0]), cin = static_cast<long>(is[1]);
  const long h = static_cast<long>(is[2]), w = static_cast<long>(is[3]);
  const long cout = static_cast<long>(ks[0]), kh = static_cast<long>(ks[2]),
             kw = static_cast<long>(ks[3]);
  const long oh = (h + 2 * pad - kh) / stride + 1;
  const long ow = (w + 2 * pad - kw) / stride + 1;
  out_h = static_cast<std::size_t>(oh);
  out_w = static_cast<std::size_t>(ow);
  std::vector<double> out(static_cast<std::size_t>(n * cout * oh * ow), 0.0);
  const auto x = input.data();
  const auto k = kernel.data();
  for (long b = 0; b < n; ++b)
    for (long co = 0; co < cout; ++co)
      for (long oy = 0; oy < oh; ++oy)
        for (long ox = 0; ox < ow; ++ox) {
          double s = bias.defined() ? bias.data()[static_cast<std::size_t>(co)] : 0.0;
          for (long ci = 0; ci < cin; ++ci)
            for (long ky = 0; ky < kh; ++ky)
              for (long kx = 0; kx < kw; ++kx) {
                const long iy = oy * stride - pad + ky;
                const long ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                s += static_cast<double>(x[static_cast<std::size_t>(((b * cin + ci) * h + iy) * w + ix)]) *
                     k[static_cast<std::size_t>(((co * cin + ci) * kh + ky) * kw + kx)];
              }
          out[static_cast<std::size_t>(((b * cout + co) * oh + oy) * ow + ox)] = s;
        }
  return out;
}

// Pixel shuffle by definition: output pixel (y, x) of channel c reads input
// channel 4c + 2 (y mod 2) + (x mod 2) at (y div 2, x div 2).
inline engine::Tensor depth_to_space_oracle(const engine::Tensor& in) {
  const auto& s = in.shape();
  const std::size_t n = s[0], c = s[1] / 4, h = s[2], w = s[3];
  engine::Tensor out({n, c, 2 * h, 2 * w});
  auto d = out.mutable_data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < 2 * h; ++y)
        for (std::size_t x = 0; x < 2 * w; ++x)
          d[((b * c + ch) * 2 * h + y) * 2 * w + x] =
              in.at(b, 4 * ch + 2 * (y % 2) + (x % 2), y / 2, x / 2);
  return out;
}

// Luma SSIM with an explicit Gaussian window at every valid position.
inline double ssim_oracle(const Image& a, const Image& b, int window = 11, double sigma = 1.5) {
  auto luma = [](const Image& im, int y, int x) {
    if (im.channels == 1) return static_cast<double>(im.at(0, y, x));
    return 0.299 * im.at(0, y, x) + 0.587 * im.at(1, y, x) + 0.114 * im.at(2, y, x);
  };
  std::vector<double> g(static_cast<std::size_t>(window * window));
  double gs = 0.0;
  const double c = (window - 1) / 2.0;
  for (int i = 0; i < window; ++i)
    for (int j = 0; j < window; ++j) {
      const double v = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2 * sigma * sigma));
      g[static_cast<std::size_t>(i * window + j)] = v;
      gs += v;
    }
  for (auto& v : g) v /= gs;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  int count = 0;
  for (int y = 0; y + window <= a.height; ++y)
    for (int x = 0; x + window <= a.width; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < window; ++i)
        for (int j = 0; j < window; ++j) {
          const double wgt = g[static_cast<std::size_t>(i * window + j)];
          const double va = luma(a, y + i, x + j), vb = luma(b, y + i, x + j);
          ma += wgt * va;
          mb += wgt * vb;
          saa += wgt * va * va;
          sbb += wgt * vb * vb;
          sab += wgt * va * vb;
        }
      const double var_a = saa - ma * ma, var_b = sbb - mb * mb, cov = sab - ma * mb;
      total += (2 * ma * mb + c1) * (2 * cov + c2) /
               ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
      ++count;
    }
  return total / count;
}

inline double psnr_oracle(const Image& a, const Image& b) {
  long double se = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const long double d = static_cast<long double>(a.pixels[i]) - b.pixels[i];
    se += d * d;
  }
  const long double mse = se / a.pixels.size();
  return static_cast<double>(-10.0L * std::log10(mse));
}

inline Image random_image(int c, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  Image im(c, h, w);
  for (auto& v : im.pixels) v = u(rng);
  return im;
}

}  // namespace lowlight::testing
