#include "cape/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cape {

double finite_diff_check(const ScalarObjective& objective, const Tensor& params, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");
  const Tensor analytic = objective(params).grad;
  if (analytic.shape() != params.shape()) {
    throw std::invalid_argument("finite_diff_check: gradient shape does not match params");
  }
  Tensor probe = params;
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    probe[i] = params[i] + h;
    const double up = objective(probe).value;
    probe[i] = params[i] - h;
    const double down = objective(probe).value;
    probe[i] = params[i];
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace cape
