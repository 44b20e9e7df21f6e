#pragma once

#include "lowlight/tensor.hpp"

namespace lowlight::engine {

enum class ConvAlgorithm {
  kDirect,  // loop nest, double accumulation; reference path
  kIm2col,  // lowered to blocked matrix products
};

struct ConvParams {
  int stride = 1;
  int padding = 0;
  ConvAlgorithm algorithm = ConvAlgorithm::kIm2col;
};

struct ConvGrads {
  Tensor input;   // undefined when not requested
  Tensor kernel;
  Tensor bias;
};

// Cross-correlation of input [N,Cin,H,W] with kernel [Cout,Cin,kh,kw] plus
// bias [Cout]. Output extent is (H + 2p - kh) / stride + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              ConvParams params = {});

// Gradients of sum(upstream * conv2d(input, kernel, bias)). saved_input must
// be the activation captured by the forward call; an undefined tensor means
// the forward ran without recording.
ConvGrads conv2d_backward(const Tensor& upstream, const Tensor& saved_input,
                          const Tensor& kernel, ConvParams params = {},
                          bool want_input = true, bool want_kernel = true);

Tensor leaky_relu(const Tensor& input, float slope);

// 2x2 / stride 2 max pooling; backward routes to the first maximum.
Tensor max_pool2(const Tensor& input);

// Nearest-neighbour x2 upsampling; backward sums each 2x2 block.
Tensor upsample2(const Tensor& input);

// Channel concatenation of two [N,C,H,W] tensors with matching N,H,W.
Tensor concat_channels(const Tensor& a, const Tensor& b);

// out[n, c, 2y+dy, 2x+dx] = in[n, 4c + 2dy + dx, y, x]
Tensor depth_to_space(const Tensor& input);
Tensor space_to_depth(const Tensor& input);

// Mean absolute difference, returned as a [1] tensor.
Tensor l1_loss(const Tensor& prediction, const Tensor& target);

// Elementwise clamp. Not differentiable; used on inference outputs.
Tensor clamp(const Tensor& input, float lo, float hi);

}  // namespace lowlight::engine
