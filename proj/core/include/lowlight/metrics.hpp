#pragma once

#include "lowlight/image.hpp"
#include "lowlight/raw_pipeline.hpp"

namespace lowlight::eval {

// Value reported for identical images.
inline constexpr double kPsnrCap = 100.0;

// 10 log10(1 / MSE) over all channels, peak 1.0, capped at 100 dB.
double psnr(const Image& a, const Image& b);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

// Luma with fixed 0.299 / 0.587 / 0.114 weights; single-channel images pass
// through.
Image luminance(const Image& image);

// Mean SSIM over every fully contained Gaussian window of the luminance.
double ssim(const Image& a, const Image& b, const SsimOptions& options = {});

// RGGB bilinear demosaic of a mosaic already in linear [0,1] units.
Image bilinear_demosaic(const raw::RawImage& mosaic);

// Amplify, clip, bilinear demosaic, gamma encode. No learning.
Image brightness_only_baseline(const raw::PackedRaw& packed, double alpha1);

}  // namespace lowlight::eval
