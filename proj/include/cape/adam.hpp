#pragma once

#include <cstdint>
#include <string_view>

#include "cape/tensor.hpp"

namespace cape {

struct AdamHyperParams {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment estimates for one parameter block.
struct AdamState {
  Tensor m;
  Tensor v;
  std::uint64_t t = 0;
  AdamHyperParams hyper;

  AdamState() = default;
  AdamState(const Shape& shape, AdamHyperParams h) : m(shape), v(shape), hyper(h) {}
};

/// Throws NumericError naming `block` if any gradient entry is NaN or Inf.
void require_finite_gradient(const Tensor& grads, std::string_view block);

/// One bias-corrected Adam update of `params` in place:
///
///   m <- b1 m + (1-b1) g,   v <- b2 v + (1-b2) g^2,   t <- t+1
///   params -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
///
/// A non-finite gradient is rejected before anything is modified.
void adam_step(Tensor& params, const Tensor& grads, AdamState& state,
               std::string_view block = "params");

}  // namespace cape
