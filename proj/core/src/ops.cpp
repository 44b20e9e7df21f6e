#include "lowlight/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gemm.hpp"
#include "lowlight/error.hpp"

namespace lowlight::engine {

namespace {

struct ConvGeometry {
  std::size_t n, cin, h, w;
  std::size_t cout, kh, kw;
  std::size_t oh, ow;
  std::size_t stride, pad;

  std::size_t patch() const { return cin * kh * kw; }
  std::size_t positions() const { return oh * ow; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

void expect_rank4(const Tensor& t, const char* op, const char* what) {
  if (!t.defined() || t.rank() != 4) {
    throw ShapeError(std::string(op) + ": " + what + " must be [N,C,H,W], got " +
                     (t.defined() ? shape_string(t.shape()) : "undefined"));
  }
}

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernel,
                           const ConvParams& p) {
  expect_rank4(input, "conv2d", "input");
  expect_rank4(kernel, "conv2d", "kernel");
  if (p.stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (p.padding < 0) throw ShapeError("conv2d: padding must be >= 0");
  ConvGeometry g{};
  g.n = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = kernel.dim(0);
  g.kh = kernel.dim(2);
  g.kw = kernel.dim(3);
  g.stride = static_cast<std::size_t>(p.stride);
  g.pad = static_cast<std::size_t>(p.padding);
  if (kernel.dim(1) != g.cin) {
    throw ShapeError("conv2d: input channels (dim 1) = " +
                     std::to_string(g.cin) + " but kernel dim 1 = " +
                     std::to_string(kernel.dim(1)));
  }
  if (g.kh % 2 == 0 || g.kw % 2 == 0) {
    throw ShapeError("conv2d: kernel extent (dims 2,3) must be odd, got " +
                     shape_string(kernel.shape()));
  }
  if (g.h + 2 * g.pad < g.kh || g.w + 2 * g.pad < g.kw) {
    throw ShapeError("conv2d: kernel " + shape_string(kernel.shape()) +
                     " larger than padded input " +
                     shape_string(input.shape()));
  }
  g.oh = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
  g.ow = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
  return g;
}

void check_bias(const Tensor& bias, std::size_t cout) {
  if (!bias.defined()) return;
  if (bias.rank() != 1 || bias.dim(0) != cout) {
    throw ShapeError("conv2d: bias must be [" + std::to_string(cout) +
                     "] (kernel dim 0), got " + shape_string(bias.shape()));
  }
}

void im2col(const ConvGeometry& g, const float* in, float* col) {
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        float* dst = col + ((c * g.kh + ky) * g.kw + kx) * positions;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad);
          float* row = dst + oy * g.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(row, row + g.ow, 0.0f);
            continue;
          }
          const float* src = in + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad);
            row[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w))
                          ? 0.0f
                          : src[ix];
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const float* col, float* in) {
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const float* src = col + ((c * g.kh + ky) * g.kw + kx) * positions;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                          static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          float* dst = in + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const float* row = src + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                            static_cast<std::ptrdiff_t>(g.pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += row[ox];
          }
        }
      }
    }
  }
}

void conv_forward_direct(const ConvGeometry& g, const float* in, const float* k,
                         const float* bias, float* out) {
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t co = 0; co < g.cout; ++co) {
      for (std::size_t oy = 0; oy < g.oh; ++oy) {
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          double acc = bias ? bias[co] : 0.0;
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                              static_cast<std::ptrdiff_t>(g.pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
              for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                static_cast<std::ptrdiff_t>(g.pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
                acc += static_cast<double>(
                           in[((n * g.cin + ci) * g.h + iy) * g.w + ix]) *
                       k[((co * g.cin + ci) * g.kh + ky) * g.kw + kx];
              }
            }
          }
          out[((n * g.cout + co) * g.oh + oy) * g.ow + ox] =
              static_cast<float>(acc);
        }
      }
    }
  }
}

void conv_forward_im2col(const ConvGeometry& g, const float* in, const float* k,
                         const float* bias, float* out) {
  const std::size_t positions = g.positions();
  std::vector<float> col;
  if (!g.pointwise()) col.resize(g.patch() * positions);
  for (std::size_t n = 0; n < g.n; ++n) {
    const float* src = in + n * g.cin * g.h * g.w;
    float* dst = out + n * g.cout * positions;
    for (std::size_t co = 0; co < g.cout; ++co) {
      std::fill(dst + co * positions, dst + (co + 1) * positions,
                bias ? bias[co] : 0.0f);
    }
    const float* lowered = src;
    if (!g.pointwise()) {
      im2col(g, src, col.data());
      lowered = col.data();
    }
    detail::gemm_nn(g.cout, positions, g.patch(), k, lowered, dst);
  }
}

void accumulate(std::span<float> dst, std::span<const float> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              ConvParams params) {
  const ConvGeometry g = conv_geometry(input, kernel, params);
  check_bias(bias, g.cout);
  Tensor out({g.n, g.cout, g.oh, g.ow});
  const float* bias_ptr = bias.defined() ? bias.data().data() : nullptr;
  if (params.algorithm == ConvAlgorithm::kDirect) {
    conv_forward_direct(g, input.data().data(), kernel.data().data(), bias_ptr,
                        out.mutable_data().data());
  } else {
    conv_forward_im2col(g, input.data().data(), kernel.data().data(), bias_ptr,
                        out.mutable_data().data());
  }

  if (GradTape::recording({&input, &kernel, &bias})) {
    out.set_requires_grad(true);
    GradTape::active()->record([input, kernel, bias, params, out]() mutable {
      if (!out.has_grad()) return;
      Tensor upstream(out.shape(),
                      std::vector<float>(out.grad().begin(), out.grad().end()));
      ConvGrads grads = conv2d_backward(upstream, input, kernel, params,
                                        input.requires_grad(),
                                        kernel.requires_grad());
      if (input.requires_grad()) accumulate(input.mutable_grad(), grads.input.data());
      if (kernel.requires_grad()) accumulate(kernel.mutable_grad(), grads.kernel.data());
      if (bias.defined() && bias.requires_grad()) {
        accumulate(bias.mutable_grad(), grads.bias.data());
      }
    });
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& upstream, const Tensor& saved_input,
                          const Tensor& kernel, ConvParams params,
                          bool want_input, bool want_kernel) {
  if (!saved_input.defined()) {
    throw Error(ErrorKind::kInvalidArgument,
                "conv2d_backward: no saved input activation (forward ran in "
                "no-grad mode)");
  }
  const ConvGeometry g = conv_geometry(saved_input, kernel, params);
  expect_rank4(upstream, "conv2d_backward", "upstream gradient");
  const Shape expected{g.n, g.cout, g.oh, g.ow};
  if (upstream.shape() != expected) {
    throw ShapeError("conv2d_backward: upstream gradient " +
                     shape_string(upstream.shape()) + " does not match output " +
                     shape_string(expected));
  }

  const std::size_t positions = g.positions();
  const float* up = upstream.data().data();
  ConvGrads grads;
  grads.bias = Tensor({g.cout});
  {
    auto gb = grads.bias.mutable_data();
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        const float* row = up + (n * g.cout + co) * positions;
        double s = 0.0;
        for (std::size_t p = 0; p < positions; ++p) s += row[p];
        gb[co] += static_cast<float>(s);
      }
    }
  }
  if (want_kernel) grads.kernel = Tensor(kernel.shape());
  if (want_input) grads.input = Tensor(saved_input.shape());
  if (!want_kernel && !want_input) return grads;

  const float* in = saved_input.data().data();
  const float* k = kernel.data().data();

  if (params.algorithm == ConvAlgorithm::kDirect) {
    float* gk = want_kernel ? grads.kernel.mutable_data().data() : nullptr;
    float* gi = want_input ? grads.input.mutable_data().data() : nullptr;
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const float gv = up[((n * g.cout + co) * g.oh + oy) * g.ow + ox];
            for (std::size_t ci = 0; ci < g.cin; ++ci) {
              for (std::size_t ky = 0; ky < g.kh; ++ky) {
                const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                static_cast<std::ptrdiff_t>(g.pad);
                if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
                for (std::size_t kx = 0; kx < g.kw; ++kx) {
                  const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                  static_cast<std::ptrdiff_t>(g.pad);
                  if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
                  const std::size_t ii = ((n * g.cin + ci) * g.h + iy) * g.w + ix;
                  const std::size_t ki = ((co * g.cin + ci) * g.kh + ky) * g.kw + kx;
                  if (gk) gk[ki] += gv * in[ii];
                  if (gi) gi[ii] += gv * k[ki];
                }
              }
            }
          }
        }
      }
    }
    return grads;
  }

  const std::size_t patch = g.patch();
  std::vector<float> col;
  std::vector<float> grad_col;
  std::vector<float> kernel_t;
  if (want_input) {
    kernel_t.resize(patch * g.cout);
    for (std::size_t co = 0; co < g.cout; ++co) {
      for (std::size_t q = 0; q < patch; ++q) kernel_t[q * g.cout + co] = k[co * patch + q];
    }
  }
  if (!g.pointwise()) {
    if (want_kernel) col.resize(patch * positions);
    if (want_input) grad_col.resize(patch * positions);
  }
  for (std::size_t n = 0; n < g.n; ++n) {
    const float* src = in + n * g.cin * g.h * g.w;
    const float* gup = up + n * g.cout * positions;
    if (want_kernel) {
      const float* lowered = src;
      if (!g.pointwise()) {
        im2col(g, src, col.data());
        lowered = col.data();
      }
      detail::gemm_nt(g.cout, positions, patch, gup, lowered,
                      grads.kernel.mutable_data().data());
    }
    if (want_input) {
      float* gi = grads.input.mutable_data().data() + n * g.cin * g.h * g.w;
      if (g.pointwise()) {
        detail::gemm_nn(patch, positions, g.cout, kernel_t.data(), gup, gi);
      } else {
        std::fill(grad_col.begin(), grad_col.end(), 0.0f);
        detail::gemm_nn(patch, positions, g.cout, kernel_t.data(), gup,
                        grad_col.data());
        col2im(g, grad_col.data(), gi);
      }
    }
  }
  return grads;
}

Tensor leaky_relu(const Tensor& input, float slope) {
  if (!(slope >= 0.0f && slope < 1.0f)) {
    throw Error(ErrorKind::kInvalidArgument, "leaky_relu: slope must be in [0,1)");
  }
  Tensor out(input.shape());
  auto src = input.data();
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = src[i] >= 0.0f ? src[i] : slope * src[i];
  }
  if (GradTape::recording({&input})) {
    out.set_requires_grad(true);
    GradTape::active()->record([input, out, slope]() mutable {
      if (!out.has_grad()) return;
      auto x = input.data();
      auto up = out.grad();
      auto gi = input.mutable_grad();
      for (std::size_t i = 0; i < x.size(); ++i) {
        gi[i] += x[i] > 0.0f ? up[i] : slope * up[i];
      }
    });
  }
  return out;
}

Tensor max_pool2(const Tensor& input) {
  expect_rank4(input, "max_pool2", "input");
  const auto& s = input.shape();
  if (s[2] % 2 != 0 || s[3] % 2 != 0) {
    throw ShapeError("max_pool2: spatial extent must be even, got " +
                     shape_string(s));
  }
  const std::size_t planes = s[0] * s[1];
  const std::size_t h = s[2], w = s[3], oh = h / 2, ow = w / 2;
  Tensor out({s[0], s[1], oh, ow});
  std::vector<std::uint32_t> argmax(out.numel());
  auto src = input.data();
  auto dst = out.mutable_data();
  for (std::size_t p = 0; p < planes; ++p) {
    const float* plane = src.data() + p * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = (2 * y) * w + 2 * x;
        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
        for (std::size_t c : cand) {
          if (plane[c] > plane[best]) best = c;
        }
        const std::size_t o = p * oh * ow + y * ow + x;
        dst[o] = plane[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  if (GradTape::recording({&input})) {
    out.set_requires_grad(true);
    GradTape::active()->record(
        [input, out, argmax = std::move(argmax), h, w, oh, ow]() mutable {
          if (!out.has_grad()) return;
          auto up = out.grad();
          auto gi = input.mutable_grad();
          for (std::size_t o = 0; o < up.size(); ++o) {
            const std::size_t plane = o / (oh * ow);
            gi[plane * h * w + argmax[o]] += up[o];
          }
        });
  }
  return out;
}

Tensor upsample2(const Tensor& input) {
  expect_rank4(input, "upsample2", "input");
  const auto& s = input.shape();
  const std::size_t planes = s[0] * s[1];
  const std::size_t h = s[2], w = s[3], oh = 2 * h, ow = 2 * w;
  Tensor out({s[0], s[1], oh, ow});
  auto src = input.data();
  auto dst = out.mutable_data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < oh; ++y) {
      const float* srow = src.data() + (p * h + y / 2) * w;
      float* drow = dst.data() + (p * oh + y) * ow;
      for (std::size_t x = 0; x < ow; ++x) drow[x] = srow[x / 2];
    }
  }
  if (GradTape::recording({&input})) {
    out.set_requires_grad(true);
    GradTape::active()->record([input, out, planes, h, w, oh, ow]() mutable {
      if (!out.has_grad()) return;
      auto up = out.grad();
      auto gi = input.mutable_grad();
      for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t y = 0; y < oh; ++y) {
          const float* urow = up.data() + (p * oh + y) * ow;
          float* grow = gi.data() + (p * h + y / 2) * w;
          for (std::size_t x = 0; x < ow; ++x) grow[x / 2] += urow[x];
        }
      }
    });
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  expect_rank4(a, "concat_channels", "first operand");
  expect_rank4(b, "concat_channels", "second operand");
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  for (std::size_t axis : {0u, 2u, 3u}) {
    if (sa[axis] != sb[axis]) {
      throw ShapeError("concat_channels: dim " + std::to_string(axis) +
                       " differs: " + shape_string(sa) + " vs " + shape_string(sb));
    }
  }
  const std::size_t plane = sa[2] * sa[3];
  const std::size_t ca = sa[1], cb = sb[1];
  Tensor out({sa[0], ca + cb, sa[2], sa[3]});
  auto dst = out.mutable_data();
  for (std::size_t n = 0; n < sa[0]; ++n) {
    std::copy_n(a.data().data() + n * ca * plane, ca * plane,
                dst.data() + n * (ca + cb) * plane);
    std::copy_n(b.data().data() + n * cb * plane, cb * plane,
                dst.data() + (n * (ca + cb) + ca) * plane);
  }
  if (GradTape::recording({&a, &b})) {
    out.set_requires_grad(true);
    GradTape::active()->record([a, b, out, ca, cb, plane]() mutable {
      if (!out.has_grad()) return;
      auto up = out.grad();
      const std::size_t batch = a.dim(0);
      for (std::size_t n = 0; n < batch; ++n) {
        const float* base = up.data() + n * (ca + cb) * plane;
        if (a.requires_grad()) {
          float* ga = a.mutable_grad().data() + n * ca * plane;
          for (std::size_t i = 0; i < ca * plane; ++i) ga[i] += base[i];
        }
        if (b.requires_grad()) {
          float* gb = b.mutable_grad().data() + n * cb * plane;
          for (std::size_t i = 0; i < cb * plane; ++i) gb[i] += base[ca * plane + i];
        }
      }
    });
  }
  return out;
}

namespace {

// Index of in[n, 4c + 2dy + dx, y, x] and out[n, c, 2y + dy, 2x + dx] for
// every element, visited in a fixed order.
template <typename Fn>
void for_each_subpixel(const Shape& packed, Fn&& fn) {
  const std::size_t batch = packed[0], cin = packed[1], h = packed[2], w = packed[3];
  const std::size_t cout = cin / 4, oh = 2 * h, ow = 2 * w;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < cout; ++c) {
      for (std::size_t dy = 0; dy < 2; ++dy) {
        for (std::size_t dx = 0; dx < 2; ++dx) {
          const std::size_t ci = 4 * c + 2 * dy + dx;
          for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
              fn(((n * cin + ci) * h + y) * w + x,
                 ((n * cout + c) * oh + 2 * y + dy) * ow + 2 * x + dx);
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor depth_to_space(const Tensor& input) {
  expect_rank4(input, "depth_to_space", "input");
  const auto& s = input.shape();
  if (s[1] % 4 != 0) {
    throw ShapeError("depth_to_space: channel count (dim 1) " +
                     std::to_string(s[1]) + " is not divisible by 4");
  }
  Tensor out({s[0], s[1] / 4, 2 * s[2], 2 * s[3]});
  auto src = input.data();
  auto dst = out.mutable_data();
  for_each_subpixel(s, [&](std::size_t i, std::size_t o) { dst[o] = src[i]; });
  if (GradTape::recording({&input})) {
    out.set_requires_grad(true);
    GradTape::active()->record([input, out]() mutable {
      if (!out.has_grad()) return;
      auto up = out.grad();
      auto gi = input.mutable_grad();
      for_each_subpixel(input.shape(),
                        [&](std::size_t i, std::size_t o) { gi[i] += up[o]; });
    });
  }
  return out;
}

Tensor space_to_depth(const Tensor& input) {
  expect_rank4(input, "space_to_depth", "input");
  const auto& s = input.shape();
  if (s[2] % 2 != 0 || s[3] % 2 != 0) {
    throw ShapeError("space_to_depth: spatial extent must be even, got " +
                     shape_string(s));
  }
  const Shape packed{s[0], s[1] * 4, s[2] / 2, s[3] / 2};
  Tensor out(packed);
  auto src = input.data();
  auto dst = out.mutable_data();
  for_each_subpixel(packed, [&](std::size_t i, std::size_t o) { dst[i] = src[o]; });
  if (GradTape::recording({&input})) {
    out.set_requires_grad(true);
    GradTape::active()->record([input, out, packed]() mutable {
      if (!out.has_grad()) return;
      auto up = out.grad();
      auto gi = input.mutable_grad();
      for_each_subpixel(packed, [&](std::size_t i, std::size_t o) { gi[o] += up[i]; });
    });
  }
  return out;
}

Tensor l1_loss(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape()) {
    throw ShapeError("l1_loss: prediction " + shape_string(prediction.shape()) +
                     " vs target " + shape_string(target.shape()));
  }
  auto p = prediction.data();
  auto t = target.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::fabs(double(p[i]) - t[i]);
  const double count = static_cast<double>(p.size());
  Tensor out({1}, std::vector<float>{static_cast<float>(sum / count)});
  if (GradTape::recording({&prediction, &target})) {
    out.set_requires_grad(true);
    GradTape::active()->record([prediction, target, out, count]() mutable {
      if (!out.has_grad()) return;
      const float scale = static_cast<float>(out.grad()[0] / count);
      auto p = prediction.data();
      auto t = target.data();
      auto sign = [](float d) { return d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f); };
      if (prediction.requires_grad()) {
        auto gp = prediction.mutable_grad();
        for (std::size_t i = 0; i < p.size(); ++i) gp[i] += scale * sign(p[i] - t[i]);
      }
      if (target.requires_grad()) {
        auto gt = target.mutable_grad();
        for (std::size_t i = 0; i < p.size(); ++i) gt[i] -= scale * sign(p[i] - t[i]);
      }
    });
  }
  return out;
}

Tensor clamp(const Tensor& input, float lo, float hi) {
  Tensor out(input.shape());
  auto src = input.data();
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::clamp(src[i], lo, hi);
  return out;
}

}  // namespace lowlight::engine
