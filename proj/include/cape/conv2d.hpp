#pragma once

#include "cape/tensor.hpp"

namespace cape {

/// Values kept by conv2d_forward for the backward pass.
struct ConvCache {
  Tensor input;    // C x H x W
  Tensor kernels;  // F x C x k x k
};

struct ConvGrads {
  Tensor input;    // C x H x W
  Tensor kernels;  // F x C x k x k
  Tensor bias;     // F
};

/// "Same" 2-D cross-correlation with zero padding of (k-1)/2 on each side.
///
///   out[f,i,j] = bias[f] + sum_{c,di,dj} in[c, i+di-r, j+dj-r] * kernels[f,c,di,dj]
///
/// with r = (k-1)/2 and out-of-range input reading as zero. Kernels must be
/// square with odd extent and their channel count must equal the input's.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias);

/// Forward pass that also fills `cache` for conv2d_backward.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                      ConvCache& cache);

/// Gradients of sum(out * upstream) with respect to input, kernels and bias.
ConvGrads conv2d_backward(const ConvCache& cache, const Tensor& upstream);

}  // namespace cape
