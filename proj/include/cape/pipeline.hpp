#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cape/calibration.hpp"
#include "cape/fieldgen.hpp"
#include "cape/model.hpp"

namespace cape {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t max_epochs = 50;    // warm-up cap
  std::size_t patience = 15;
  double min_delta = 0.0;
  std::size_t batch_size = 16;    // samples per minibatch
  std::size_t bins = kDefaultBins;
  double lambda = 0.5;            // weight of L_C in the combined loss
  std::size_t folds = 9;
  std::size_t cape_epochs = 50;   // total epoch budget shared by warm-up and CaPE
  std::size_t filters = 8;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the first offending field.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Cross-validation

using IndexList = std::vector<std::size_t>;

/// Shuffles 0..n-1 with `seed` and cuts it into k contiguous folds whose
/// sizes differ by at most one. Throws ConfigError if n < k or k < 3.
std::vector<IndexList> split_kfold(std::size_t n_samples, std::size_t k, std::uint64_t seed);

struct Rotation {
  IndexList train;
  IndexList val;
  IndexList test;
};

/// Rotation r: fold r is test, fold (r+1) mod k is validation, the rest train.
Rotation rotation_roles(const std::vector<IndexList>& folds, std::size_t r);

// ---------------------------------------------------------------------------
// Training

enum class Phase { kWarmup, kCape };
std::string_view phase_name(Phase phase);

struct EpochRecord {
  std::size_t epoch = 0;           // 1-based
  Phase phase = Phase::kWarmup;
  double train_loss = 0.0;         // loss actually minimized, mean over train pixels
  double val_loss = 0.0;           // L_D on the validation split
  double brier = 0.0;              // on the validation split
  std::optional<double> kl_true;   // on the validation split
};

/// Patience-based early stopping on a minimized quantity. An epoch counts
/// as an improvement only if value < best - min_delta.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, double min_delta);

  /// Returns true if `value` is the new best.
  bool update(std::size_t epoch, double value);
  bool should_stop() const noexcept { return since_best_ >= patience_; }
  std::size_t best_epoch() const noexcept { return best_epoch_; }
  double best_value() const noexcept { return best_value_; }

 private:
  std::size_t patience_;
  double min_delta_;
  std::size_t best_epoch_ = 0;
  double best_value_;
  std::size_t since_best_ = 0;
};

/// Model weights plus the optimizer moments that go with them.
struct TrainingState {
  ModelParams params;
  ModelOptimizer optimizer;
};

struct WarmupResult {
  TrainingState best;             // checkpoint with the minimum validation L_D
  double best_val_loss = 0.0;
  std::size_t best_epoch = 0;
  std::size_t stop_epoch = 0;     // last epoch run
  std::vector<EpochRecord> records;
};

struct ContinuationResult {
  ModelParams params;
  std::vector<EpochRecord> records;
};

/// Minibatch Adam on L_D with early stopping on validation L_D; returns the
/// best checkpoint, not the last one. Only rotation.train and rotation.val
/// are read.
WarmupResult train_warmup(const Dataset& data, const Rotation& rotation, const TrainConfig& config);

/// Resumes from `start` (the warm-up best, reached at `start_epoch`) and runs
/// epochs start_epoch+1 .. config.cape_epochs. Each epoch rebuilds quantile
/// bins over the whole training split with the current model, freezes the
/// per-pixel p_emp targets, then takes minibatch steps on
/// (1-lambda) L_D + lambda L_C.
ContinuationResult train_cape(const TrainingState& start, std::size_t start_epoch,
                              const Dataset& data, const Rotation& rotation,
                              const TrainConfig& config);

/// The same continuation with plain L_D and no binning.
ContinuationResult continue_bce(const TrainingState& start, std::size_t start_epoch,
                                const Dataset& data, const Rotation& rotation,
                                const TrainConfig& config);

// ---------------------------------------------------------------------------
// Evaluation

struct PixelSet {
  std::vector<double> predictions;
  std::vector<double> outcomes;
  std::optional<std::vector<double>> true_p;
};

/// Model predictions for every pixel of the listed samples, in order.
PixelSet collect_predictions(const ModelParams& params, const Dataset& data,
                             std::span<const std::size_t> indices);
/// The oracle predictor: true_p itself stands in for the model output.
PixelSet collect_oracle(const Dataset& data, std::span<const std::size_t> indices);

MetricsReport evaluate_pixels(const PixelSet& pixels, std::size_t bins);

/// Metrics with a fresh BinTable built on the predictions for `indices`.
MetricsReport evaluate_arm(const ModelParams& params, const Dataset& data,
                           std::span<const std::size_t> indices, std::size_t bins);

// ---------------------------------------------------------------------------
// Experiments

enum class Arm { kBce, kCape };
std::string_view arm_name(Arm arm);

struct FoldResult {
  std::size_t rotation = 0;
  std::size_t best_epoch = 0;
  std::size_t stop_epoch = 0;
  std::size_t final_epoch = 0;            // last epoch of the CaPE arm
  MetricsReport bce;                      // early-stop checkpoint on test
  MetricsReport cape;                     // CaPE continuation on test
  std::vector<EpochRecord> warmup_records;
  std::vector<EpochRecord> cape_records;
  ModelParams bce_params;
  ModelParams cape_params;
};

/// Trains one fold rotation end to end: warm-up, then both arms on test.
FoldResult run_fold(const Dataset& data, const std::vector<IndexList>& folds, std::size_t rotation,
                    const TrainConfig& config);

struct ArmSummary {
  double ece_mean = 0.0, ece_std = 0.0;
  double brier_mean = 0.0, brier_std = 0.0;
  std::optional<double> kl_mean, kl_std;
};

struct CellReport {
  double rho = 0.0;
  std::size_t n_samples = 0;
  bool ok = true;
  std::string error;
  std::vector<FoldResult> folds;
  ArmSummary bce;
  ArmSummary cape;
};

struct SweepGrid {
  FieldConfig field;                  // target_rate and seed are set per cell
  std::vector<double> rhos{0.011, 0.032, 0.07, 0.14, 0.30, 0.46};
  std::vector<std::size_t> sizes{200, 600, 1500};
};

struct SweepReport {
  std::vector<CellReport> cells;
  std::size_t failed_cells() const;
};

ArmSummary summarize(std::span<const FoldResult> folds, Arm arm);

/// Runs every (rho, n) cell and every fold rotation. Cell c uses seeds
/// derived from (master_seed, c), so results do not depend on `threads`.
/// A failing cell is recorded with its error and the sweep continues.
SweepReport run_experiment(const SweepGrid& grid, const TrainConfig& config,
                           std::uint64_t master_seed, std::size_t threads = 1);

}  // namespace cape
