#pragma once

// Test fixtures shared by the unit suites and the acceptance binary.

#include <cmath>
#include <optional>
#include <vector>

#include "cape/calibration.hpp"
#include "cape/conv2d.hpp"
#include "cape/gradcheck.hpp"
#include "cape/model.hpp"
#include "oracles.hpp"

namespace support {

enum class Loss { kD, kC };

// A random model, input and target set on which the relu kink and the logit
// clamp are both at least `margin` away from every pre-activation.
struct GradInstance {
  cape::ModelParams params;
  cape::Tensor input;
  std::vector<double> targets;  // outcomes for L_D, frozen p_emp for L_C
};

inline bool clear_of_kinks(const cape::ModelParams& p, const cape::Tensor& x, double margin) {
  const cape::Tensor hidden = cape::conv2d_forward(x, p.k1, p.b1);
  for (double v : hidden.storage()) {
    if (std::abs(v) < margin) return false;
  }
  cape::ForwardCache cache;
  cape::forward(p, x, cache);
  for (double z : cache.logits.storage()) {
    if (std::abs(z) > cape::kLogitClamp - 1.0) return false;
  }
  return true;
}

inline GradInstance make_grad_instance(cape::Rng& rng, Loss loss, std::size_t channels = 3,
                                       std::size_t filters = 8, std::size_t size = 4,
                                       double margin = 1e-3) {
  for (;;) {
    GradInstance g;
    g.params = cape::init_params(channels, filters, rng);
    for (auto* block : g.params.blocks()) {
      for (auto& v : block->storage()) v += 0.1 * rng.normal();
    }
    g.input = oracle::random_tensor({channels, size, size}, rng);
    if (!clear_of_kinks(g.params, g.input, margin)) continue;
    g.targets = loss == Loss::kD ? oracle::random_outcomes(size * size, rng)
                                 : oracle::random_probs(size * size, rng);
    return g;
  }
}

// Loss as a function of the flattened parameter vector, with its analytic
// gradient from forward/backward.
inline cape::ScalarObjective model_objective(const GradInstance& g, Loss loss) {
  const std::size_t c = g.params.channels(), f = g.params.filters();
  return [&g, loss, c, f](const cape::Tensor& flat) {
    const cape::ModelParams p = cape::unflatten(flat, c, f);
    cape::ForwardCache cache;
    const cape::Tensor probs = cape::forward(p, g.input, cache);
    cape::LossResult r = loss == Loss::kD ? cape::loss_d(probs.data(), g.targets)
                                          : cape::loss_c(probs.data(), g.targets);
    const cape::ModelGrads grads = cape::backward(p, cache, cape::Tensor(probs.shape(), std::move(r.grad)));
    return cape::ValueAndGrad{r.value, cape::flatten(grads)};
  };
}

inline double model_gradient_error(const GradInstance& g, Loss loss) {
  return cape::finite_diff_check(model_objective(g, loss), cape::flatten(g.params));
}

}  // namespace support
