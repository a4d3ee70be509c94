#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace cape {

/// Quantile bins over a set of predictions.
///
/// edges holds B+1 values with edges[0] = 0 and edges[B] = 1; for 0 < b < B,
/// edges[b] is the largest prediction in bin b-1 (0-based). Per bin,
/// q is the mean prediction and p_emp the mean observed outcome.
struct BinTable {
  std::vector<double> edges;
  std::vector<std::size_t> count;
  std::vector<double> q;
  std::vector<double> p_emp;

  std::size_t bins() const noexcept { return count.size(); }
  std::size_t total() const noexcept;
};

/// A BinTable together with the bin each input pixel was assigned to.
struct Binning {
  BinTable table;
  std::vector<std::uint32_t> pixel_bin;
};

inline constexpr std::size_t kDefaultBins = 20;

/// Splits predictions into `bins` rank-contiguous groups. Pixels are ordered
/// by prediction, ties broken by input position, and bin b takes sorted
/// positions [ceil(b N / B), ceil((b+1) N / B)), so bin sizes differ by at
/// most one and no bin is empty. Throws std::invalid_argument if N < B.
Binning quantile_binning(std::span<const double> predictions, std::span<const double> outcomes,
                         std::size_t bins);

inline BinTable build_bins(std::span<const double> predictions, std::span<const double> outcomes,
                           std::size_t bins) {
  return quantile_binning(predictions, outcomes, bins).table;
}

/// Per-pixel calibration targets: pixel i receives p_emp of its bin.
std::vector<double> assign_p_emp(const Binning& binning);

/// (1/B) sum_b |p_emp[b] - q[b]|.
double ece(const BinTable& table);

/// (1/N) sum_i (f_i - y_i)^2.
double brier(std::span<const double> predictions, std::span<const double> outcomes);

inline constexpr double kKlEps = 1e-6;

/// Mean per-pixel Bernoulli KL(true_p || prediction) in nats, predictions
/// clamped to [eps, 1-eps]. Returns nullopt when true_p is unavailable.
std::optional<double> kl_true(std::span<const double> predictions,
                              std::optional<std::span<const double>> true_p,
                              double eps = kKlEps);

inline constexpr double kLossEps = 1e-7;

struct LossResult {
  double value = 0.0;
  std::vector<double> grad;   // d value / d prediction
  std::size_t clamped = 0;    // predictions moved into [eps, 1-eps]
};

/// Mean soft-target binary cross-entropy
///   -(1/N) sum [t log f + (1-t) log(1-f)]
/// with gradient (f - t) / (N f (1-f)). Predictions outside [1e-7, 1-1e-7]
/// are clamped; their gradient is taken at the clamped value.
LossResult cross_entropy(std::span<const double> predictions, std::span<const double> targets);

/// Discrimination loss: cross-entropy against binary outcomes.
inline LossResult loss_d(std::span<const double> predictions, std::span<const double> outcomes) {
  return cross_entropy(predictions, outcomes);
}

/// Calibration loss: cross-entropy against frozen per-pixel p_emp targets.
inline LossResult loss_c(std::span<const double> predictions, std::span<const double> p_emp) {
  return cross_entropy(predictions, p_emp);
}

/// (1 - lambda) L_D + lambda L_C, lambda in [0, 1].
LossResult loss_combined(std::span<const double> predictions, std::span<const double> outcomes,
                         std::span<const double> p_emp, double lambda);

struct MetricsReport {
  double ece = 0.0;
  double brier = 0.0;
  std::optional<double> kl_true;
  BinTable bins;
  std::size_t n_pixels = 0;
};

/// ECE on a fresh quantile BinTable, Brier, and KL when true_p is given.
MetricsReport compute_metrics(std::span<const double> predictions, std::span<const double> outcomes,
                              std::optional<std::span<const double>> true_p, std::size_t bins);

}  // namespace cape
