#include "cape/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <thread>

#include "cape/errors.hpp"

namespace cape {
namespace {

// Sub-stream tags for Rng::derive.
constexpr std::uint64_t kInitStream = 0x1001;
constexpr std::uint64_t kBatchStream = 0x2002;
constexpr std::uint64_t kSplitStream = 0x3003;
constexpr std::uint64_t kFoldStream = 0x4004;
constexpr std::uint64_t kCellStream = 0x5005;

Rng substream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  return Rng::derive(Rng::derive(seed, tag).next_u64(), index);
}

template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

// One pass over the training split in a seeded batch order. With `targets`
// (aligned with `train`) the combined CaPE loss is minimized, otherwise L_D.
// Returns the mean training loss over all pixels.
double run_epoch(TrainingState& state, const Dataset& data, const IndexList& train,
                 const TrainConfig& config, std::size_t epoch,
                 const std::vector<std::vector<double>>* targets) {
  IndexList order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = substream(config.seed, kBatchStream, epoch);
  shuffle(order, rng);

  double loss_total = 0.0;
  ForwardCache cache;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t stop = std::min(order.size(), start + config.batch_size);
    const double scale = 1.0 / static_cast<double>(stop - start);
    ModelGrads batch_grads(state.params.channels(), state.params.filters());
    for (std::size_t b = start; b < stop; ++b) {
      const std::size_t pos = order[b];
      const Sample& s = data.samples[train[pos]];
      const Tensor probs = forward(state.params, s.inputs, cache);
      LossResult loss = targets ? loss_combined(probs.data(), s.outcomes.data(),
                                                (*targets)[pos], config.lambda)
                                : loss_d(probs.data(), s.outcomes.data());
      for (auto& g : loss.grad) g *= scale;
      const ModelGrads g = backward(state.params, cache, Tensor(probs.shape(), std::move(loss.grad)));
      auto dst = batch_grads.blocks();
      auto src = g.blocks();
      for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] += *src[i];
      loss_total += loss.value;
    }
    state.optimizer.step(state.params, batch_grads);
  }
  const double train_loss = loss_total / static_cast<double>(order.size());
  if (!std::isfinite(train_loss)) {
    throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
  }
  return train_loss;
}

EpochRecord validation_record(const ModelParams& params, const Dataset& data,
                              const IndexList& val, std::size_t epoch, Phase phase,
                              double train_loss) {
  const PixelSet pixels = collect_predictions(params, data, val);
  EpochRecord rec;
  rec.epoch = epoch;
  rec.phase = phase;
  rec.train_loss = train_loss;
  rec.val_loss = loss_d(pixels.predictions, pixels.outcomes).value;
  rec.brier = brier(pixels.predictions, pixels.outcomes);
  if (pixels.true_p) rec.kl_true = kl_true(pixels.predictions, std::span<const double>(*pixels.true_p));
  if (!std::isfinite(rec.val_loss)) {
    throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
  }
  return rec;
}

// Per-pixel p_emp targets for every training sample, from bins rebuilt on
// the current model's predictions over the whole training split.
std::vector<std::vector<double>> frozen_targets(const ModelParams& params, const Dataset& data,
                                                const IndexList& train, std::size_t bins) {
  const PixelSet pixels = collect_predictions(params, data, train);
  const Binning binning = quantile_binning(pixels.predictions, pixels.outcomes, bins);
  const std::vector<double> flat = assign_p_emp(binning);
  const std::size_t plane = data.height() * data.width();
  std::vector<std::vector<double>> targets(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto first = flat.begin() + static_cast<std::ptrdiff_t>(i * plane);
    targets[i].assign(first, first + static_cast<std::ptrdiff_t>(plane));
  }
  return targets;
}

ContinuationResult continue_training(const TrainingState& start, std::size_t start_epoch,
                                     const Dataset& data, const Rotation& rotation,
                                     const TrainConfig& config, bool cape) {
  config.validate();
  TrainingState state = start;
  ContinuationResult result;
  const Phase phase = cape ? Phase::kCape : Phase::kWarmup;
  for (std::size_t epoch = start_epoch + 1; epoch <= config.cape_epochs; ++epoch) {
    double train_loss = 0.0;
    if (cape) {
      const auto targets = frozen_targets(state.params, data, rotation.train, config.bins);
      train_loss = run_epoch(state, data, rotation.train, config, epoch, &targets);
    } else {
      train_loss = run_epoch(state, data, rotation.train, config, epoch, nullptr);
    }
    result.records.push_back(
        validation_record(state.params, data, rotation.val, epoch, phase, train_loss));
  }
  result.params = std::move(state.params);
  return result;
}

double sample_std(std::span<const double> values, double mu) {
  if (values.size() < 2) return 0.0;
  double acc = 0.0;
  for (double v : values) acc += (v - mu) * (v - mu);
  return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

// Runs fn(i) for i in [0, count) on up to `threads` workers. Each index is
// handled by exactly one worker; exceptions are captured per index.
template <typename Fn>
std::vector<std::exception_ptr> parallel_for(std::size_t count, std::size_t threads, Fn fn) {
  std::vector<std::exception_ptr> errors(count);
  auto guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, count));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) guarded(i);
    return errors;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) guarded(i);
    });
  }
  for (auto& th : pool) th.join();
  return errors;
}

std::string describe(const std::exception_ptr& error) {
  try {
    std::rethrow_exception(error);
  } catch (const std::exception& e) {
    return e.what();
  } catch (...) {
    return "unknown error";
  }
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("invalid train config '" + field + "': " + why);
  };
  if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr", "must be > 0");
  if (max_epochs == 0) fail("max_epochs", "must be >= 1");
  if (patience >= max_epochs) fail("patience", "must be < max_epochs");
  if (!(min_delta >= 0.0)) fail("min_delta", "must be >= 0");
  if (batch_size == 0) fail("batch_size", "must be >= 1");
  if (bins == 0) fail("bins", "must be >= 1");
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail("lambda", "must lie in [0, 1]");
  if (folds < 3) fail("folds", "must be >= 3");
  if (filters == 0) fail("filters", "must be >= 1");
}

std::vector<IndexList> split_kfold(std::size_t n_samples, std::size_t k, std::uint64_t seed) {
  if (k < 3) throw ConfigError("split_kfold: need at least 3 folds, got " + std::to_string(k));
  if (n_samples < k) {
    throw ConfigError("split_kfold: " + std::to_string(n_samples) + " samples cannot fill " +
                      std::to_string(k) + " folds");
  }
  IndexList perm(n_samples);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = substream(seed, kSplitStream, 0);
  shuffle(perm, rng);
  std::vector<IndexList> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t lo = f * n_samples / k;
    const std::size_t hi = (f + 1) * n_samples / k;
    folds[f].assign(perm.begin() + static_cast<std::ptrdiff_t>(lo),
                    perm.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  return folds;
}

Rotation rotation_roles(const std::vector<IndexList>& folds, std::size_t r) {
  const std::size_t k = folds.size();
  if (r >= k) throw std::invalid_argument("rotation index out of range");
  Rotation rot;
  rot.test = folds[r];
  rot.val = folds[(r + 1) % k];
  for (std::size_t f = 0; f < k; ++f) {
    if (f == r || f == (r + 1) % k) continue;
    rot.train.insert(rot.train.end(), folds[f].begin(), folds[f].end());
  }
  return rot;
}

std::string_view phase_name(Phase phase) { return phase == Phase::kWarmup ? "warmup" : "cape"; }
std::string_view arm_name(Arm arm) { return arm == Arm::kBce ? "bce" : "cape"; }

EarlyStopping::EarlyStopping(std::size_t patience, double min_delta)
    : patience_(patience),
      min_delta_(min_delta),
      best_value_(std::numeric_limits<double>::infinity()) {}

bool EarlyStopping::update(std::size_t epoch, double value) {
  if (value < best_value_ - min_delta_) {
    best_value_ = value;
    best_epoch_ = epoch;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

WarmupResult train_warmup(const Dataset& data, const Rotation& rotation, const TrainConfig& config) {
  config.validate();
  if (rotation.train.empty() || rotation.val.empty()) {
    throw ConfigError("train_warmup: empty training or validation split");
  }
  Rng init = substream(config.seed, kInitStream, 0);
  ModelParams params = init_params(data.channels(), config.filters, init);
  TrainingState state{params, ModelOptimizer(params, AdamHyperParams{.lr = config.lr})};

  WarmupResult result;
  EarlyStopping stopper(config.patience, config.min_delta);
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double train_loss = run_epoch(state, data, rotation.train, config, epoch, nullptr);
    result.records.push_back(
        validation_record(state.params, data, rotation.val, epoch, Phase::kWarmup, train_loss));
    result.stop_epoch = epoch;
    if (stopper.update(epoch, result.records.back().val_loss)) result.best = state;
    if (stopper.should_stop()) break;
  }
  result.best_epoch = stopper.best_epoch();
  result.best_val_loss = stopper.best_value();
  return result;
}

ContinuationResult train_cape(const TrainingState& start, std::size_t start_epoch,
                              const Dataset& data, const Rotation& rotation,
                              const TrainConfig& config) {
  return continue_training(start, start_epoch, data, rotation, config, true);
}

ContinuationResult continue_bce(const TrainingState& start, std::size_t start_epoch,
                                const Dataset& data, const Rotation& rotation,
                                const TrainConfig& config) {
  return continue_training(start, start_epoch, data, rotation, config, false);
}

PixelSet collect_predictions(const ModelParams& params, const Dataset& data,
                             std::span<const std::size_t> indices) {
  PixelSet out;
  const std::size_t plane = data.height() * data.width();
  out.predictions.reserve(indices.size() * plane);
  out.outcomes.reserve(indices.size() * plane);
  const bool with_p = data.has_true_p();
  if (with_p) out.true_p.emplace().reserve(indices.size() * plane);
  for (std::size_t idx : indices) {
    const Sample& s = data.samples.at(idx);
    const Tensor probs = predict(params, s.inputs);
    out.predictions.insert(out.predictions.end(), probs.storage().begin(), probs.storage().end());
    out.outcomes.insert(out.outcomes.end(), s.outcomes.storage().begin(), s.outcomes.storage().end());
    if (with_p) out.true_p->insert(out.true_p->end(), s.true_p->storage().begin(), s.true_p->storage().end());
  }
  return out;
}

PixelSet collect_oracle(const Dataset& data, std::span<const std::size_t> indices) {
  if (!data.has_true_p()) throw FormatError("oracle predictions need true_p in the dataset");
  PixelSet out;
  out.true_p.emplace();
  for (std::size_t idx : indices) {
    const Sample& s = data.samples.at(idx);
    out.predictions.insert(out.predictions.end(), s.true_p->storage().begin(), s.true_p->storage().end());
    out.outcomes.insert(out.outcomes.end(), s.outcomes.storage().begin(), s.outcomes.storage().end());
    out.true_p->insert(out.true_p->end(), s.true_p->storage().begin(), s.true_p->storage().end());
  }
  return out;
}

MetricsReport evaluate_pixels(const PixelSet& pixels, std::size_t bins) {
  std::optional<std::span<const double>> true_p;
  if (pixels.true_p) true_p = std::span<const double>(*pixels.true_p);
  return compute_metrics(pixels.predictions, pixels.outcomes, true_p, bins);
}

MetricsReport evaluate_arm(const ModelParams& params, const Dataset& data,
                           std::span<const std::size_t> indices, std::size_t bins) {
  return evaluate_pixels(collect_predictions(params, data, indices), bins);
}

FoldResult run_fold(const Dataset& data, const std::vector<IndexList>& folds, std::size_t rotation,
                    const TrainConfig& config) {
  const Rotation roles = rotation_roles(folds, rotation);
  TrainConfig fold_config = config;
  fold_config.seed = substream(config.seed, kFoldStream, rotation).next_u64();

  FoldResult out;
  out.rotation = rotation;
  WarmupResult warm = train_warmup(data, roles, fold_config);
  out.best_epoch = warm.best_epoch;
  out.stop_epoch = warm.stop_epoch;
  out.bce = evaluate_arm(warm.best.params, data, roles.test, config.bins);
  ContinuationResult cont = train_cape(warm.best, warm.best_epoch, data, roles, fold_config);
  out.final_epoch = std::max(warm.best_epoch, config.cape_epochs);
  out.cape = evaluate_arm(cont.params, data, roles.test, config.bins);
  out.warmup_records = std::move(warm.records);
  out.cape_records = std::move(cont.records);
  out.bce_params = std::move(warm.best.params);
  out.cape_params = std::move(cont.params);
  return out;
}

ArmSummary summarize(std::span<const FoldResult> folds, Arm arm) {
  ArmSummary s;
  if (folds.empty()) return s;
  std::vector<double> eces, briers, kls;
  for (const auto& f : folds) {
    const MetricsReport& m = arm == Arm::kBce ? f.bce : f.cape;
    eces.push_back(m.ece);
    briers.push_back(m.brier);
    if (m.kl_true) kls.push_back(*m.kl_true);
  }
  s.ece_mean = mean(eces);
  s.ece_std = sample_std(eces, s.ece_mean);
  s.brier_mean = mean(briers);
  s.brier_std = sample_std(briers, s.brier_mean);
  if (kls.size() == folds.size()) {
    s.kl_mean = mean(kls);
    s.kl_std = sample_std(kls, *s.kl_mean);
  }
  return s;
}

std::size_t SweepReport::failed_cells() const {
  return static_cast<std::size_t>(
      std::count_if(cells.begin(), cells.end(), [](const CellReport& c) { return !c.ok; }));
}

SweepReport run_experiment(const SweepGrid& grid, const TrainConfig& config,
                           std::uint64_t master_seed, std::size_t threads) {
  config.validate();
  if (grid.rhos.empty() || grid.sizes.empty()) throw ConfigError("sweep grid is empty");
  SweepReport report;
  std::size_t cell_index = 0;
  for (double rho : grid.rhos) {
    for (std::size_t n : grid.sizes) {
      CellReport cell;
      cell.rho = rho;
      cell.n_samples = n;
      const std::uint64_t cell_seed = substream(master_seed, kCellStream, cell_index++).next_u64();
      try {
        FieldConfig field = grid.field;
        field.target_rate = rho;
        field.seed = cell_seed;
        const Dataset data = generate_dataset(field, n);
        TrainConfig cell_config = config;
        cell_config.seed = cell_seed;
        const auto folds = split_kfold(n, config.folds, cell_seed);

        cell.folds.resize(config.folds);
        const auto errors = parallel_for(config.folds, threads, [&](std::size_t r) {
          cell.folds[r] = run_fold(data, folds, r, cell_config);
        });
        for (std::size_t r = 0; r < errors.size(); ++r) {
          if (errors[r]) {
            throw std::runtime_error("fold " + std::to_string(r) + ": " + describe(errors[r]));
          }
        }
        cell.bce = summarize(cell.folds, Arm::kBce);
        cell.cape = summarize(cell.folds, Arm::kCape);
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
        cell.folds.clear();
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

}  // namespace cape
