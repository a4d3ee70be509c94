#pragma once

#include <functional>

#include "cape/tensor.hpp"

namespace cape {

struct ValueAndGrad {
  double value = 0.0;
  Tensor grad;
};

using ScalarObjective = std::function<ValueAndGrad(const Tensor& params)>;

inline constexpr double kFiniteDiffStep = 1e-4;

/// Compares the gradient reported by `objective` at `params` against central
/// differences (L(p + h e_i) - L(p - h e_i)) / 2h for every coordinate.
///
/// Returns max_i |analytic_i - numeric_i| / max(1e-8, |analytic_i| + |numeric_i|).
double finite_diff_check(const ScalarObjective& objective, const Tensor& params,
                         double h = kFiniteDiffStep);

}  // namespace cape
