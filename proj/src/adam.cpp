#include "cape/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "cape/errors.hpp"

namespace cape {

void require_finite_gradient(const Tensor& grads, std::string_view block) {
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("non-finite gradient in parameter block '" + std::string(block) +
                         "' at element " + std::to_string(i));
    }
  }
}

void adam_step(Tensor& params, const Tensor& grads, AdamState& state, std::string_view block) {
  if (params.shape() != grads.shape() || params.shape() != state.m.shape() ||
      params.shape() != state.v.shape()) {
    throw std::invalid_argument("adam_step: shape mismatch for block '" + std::string(block) +
                                "'");
  }
  require_finite_gradient(grads, block);

  const auto& h = state.hyper;
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(h.beta1, t);
  const double correction2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g;
    state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * g * g;
    const double m_hat = state.m[i] / correction1;
    const double v_hat = state.v[i] / correction2;
    params[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
  }
}

}  // namespace cape
