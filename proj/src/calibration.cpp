#include "cape/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cape {
namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(a) +
                                " vs " + std::to_string(b) + ")");
  }
}

}  // namespace

std::size_t BinTable::total() const noexcept {
  return std::accumulate(count.begin(), count.end(), std::size_t{0});
}

Binning quantile_binning(std::span<const double> predictions, std::span<const double> outcomes,
                         std::size_t bins) {
  require_same_length(predictions.size(), outcomes.size(), "quantile_binning");
  const std::size_t n = predictions.size();
  if (bins == 0) throw std::invalid_argument("quantile_binning: bin count must be >= 1");
  if (n < bins) {
    throw std::invalid_argument("quantile_binning: " + std::to_string(n) +
                                " predictions cannot fill " + std::to_string(bins) +
                                " bins; lower the bin count");
  }

  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return predictions[a] < predictions[b]; });

  Binning result;
  auto& t = result.table;
  t.edges.assign(bins + 1, 0.0);
  t.count.assign(bins, 0);
  t.q.assign(bins, 0.0);
  t.p_emp.assign(bins, 0.0);
  result.pixel_bin.assign(n, 0);

  auto start = [&](std::size_t b) { return (b * n + bins - 1) / bins; };
  for (std::size_t b = 0; b < bins; ++b) {
    const std::size_t lo = start(b);
    const std::size_t hi = start(b + 1);
    double pred_sum = 0.0;
    double outcome_sum = 0.0;
    for (std::size_t r = lo; r < hi; ++r) {
      const auto i = order[r];
      result.pixel_bin[i] = static_cast<std::uint32_t>(b);
      pred_sum += predictions[i];
      outcome_sum += outcomes[i];
    }
    const auto size = hi - lo;
    t.count[b] = size;
    t.q[b] = pred_sum / static_cast<double>(size);
    t.p_emp[b] = outcome_sum / static_cast<double>(size);
    if (b > 0) t.edges[b] = predictions[order[lo - 1]];
  }
  t.edges[bins] = 1.0;
  return result;
}

std::vector<double> assign_p_emp(const Binning& binning) {
  std::vector<double> targets(binning.pixel_bin.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    targets[i] = binning.table.p_emp[binning.pixel_bin[i]];
  }
  return targets;
}

double ece(const BinTable& table) {
  if (table.bins() == 0) throw std::invalid_argument("ece: empty bin table");
  double total = 0.0;
  for (std::size_t b = 0; b < table.bins(); ++b) {
    if (table.count[b] == 0) throw std::invalid_argument("ece: bin " + std::to_string(b) + " is empty");
    total += std::abs(table.p_emp[b] - table.q[b]);
  }
  return total / static_cast<double>(table.bins());
}

double brier(std::span<const double> predictions, std::span<const double> outcomes) {
  require_same_length(predictions.size(), outcomes.size(), "brier");
  if (predictions.empty()) throw std::invalid_argument("brier: no predictions");
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = predictions[i] - outcomes[i];
    total += d * d;
  }
  return total / static_cast<double>(predictions.size());
}

std::optional<double> kl_true(std::span<const double> predictions,
                              std::optional<std::span<const double>> true_p, double eps) {
  if (!true_p) return std::nullopt;
  require_same_length(predictions.size(), true_p->size(), "kl_true");
  if (predictions.empty()) throw std::invalid_argument("kl_true: no predictions");
  // x log(x / y) with the 0 log 0 = 0 convention.
  auto term = [](double x, double y) { return x > 0.0 ? x * std::log(x / y) : 0.0; };
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double f = std::clamp(predictions[i], eps, 1.0 - eps);
    const double p = (*true_p)[i];
    total += term(p, f) + term(1.0 - p, 1.0 - f);
  }
  return total / static_cast<double>(predictions.size());
}

LossResult cross_entropy(std::span<const double> predictions, std::span<const double> targets) {
  require_same_length(predictions.size(), targets.size(), "cross_entropy");
  const std::size_t n = predictions.size();
  if (n == 0) throw std::invalid_argument("cross_entropy: no predictions");
  LossResult r;
  r.grad.resize(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double f = predictions[i];
    if (!(f >= kLossEps && f <= 1.0 - kLossEps)) {
      f = std::clamp(f, kLossEps, 1.0 - kLossEps);
      ++r.clamped;
    }
    const double t = targets[i];
    total -= t * std::log(f) + (1.0 - t) * std::log1p(-f);
    r.grad[i] = (f - t) * inv_n / (f * (1.0 - f));
  }
  r.value = total * inv_n;
  return r;
}

LossResult loss_combined(std::span<const double> predictions, std::span<const double> outcomes,
                         std::span<const double> p_emp, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("loss_combined: lambda must lie in [0, 1]");
  }
  LossResult d = loss_d(predictions, outcomes);
  const LossResult c = loss_c(predictions, p_emp);
  d.value = (1.0 - lambda) * d.value + lambda * c.value;
  for (std::size_t i = 0; i < d.grad.size(); ++i) {
    d.grad[i] = (1.0 - lambda) * d.grad[i] + lambda * c.grad[i];
  }
  return d;
}

MetricsReport compute_metrics(std::span<const double> predictions, std::span<const double> outcomes,
                              std::optional<std::span<const double>> true_p, std::size_t bins) {
  MetricsReport m;
  m.bins = build_bins(predictions, outcomes, bins);
  m.ece = ece(m.bins);
  m.brier = brier(predictions, outcomes);
  m.kl_true = kl_true(predictions, true_p);
  m.n_pixels = predictions.size();
  return m;
}

}  // namespace cape
