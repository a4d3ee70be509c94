#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cape {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitFormat = 2,
  kExitNumeric = 3,
  kExitPartial = 4,
};

struct GenerateOptions {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  bool force = false;
};

struct TrainOptions {
  std::filesystem::path dataset;
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::optional<std::size_t> bins;
  std::size_t threads = 1;
  bool force = false;
};

struct EvaluateOptions {
  std::filesystem::path dataset;
  std::optional<std::filesystem::path> checkpoint;
  bool oracle = false;
  std::size_t bins = 20;
  std::filesystem::path out;
  bool force = false;
};

struct SweepOptions {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::optional<std::size_t> bins;
  std::size_t threads = 1;
  bool force = false;
};

struct PlotOptions {
  std::filesystem::path csv;
  std::filesystem::path out;
  bool force = false;
};

// Each command writes into its output directory and finishes with
// manifest.json. Errors propagate as ConfigError / FormatError /
// NumericError.

/// Writes dataset.bin. Config keys: the generator keys plus n_samples.
void cmd_generate(const GenerateOptions& opts);
/// Writes epochs.csv, bce.ckpt, cape.ckpt and test_metrics.csv.
void cmd_train(const TrainOptions& opts);
/// Writes metrics.csv and reliability.csv.
void cmd_evaluate(const EvaluateOptions& opts);
/// Writes sweep.csv, sweep_summary.csv, ece_vs_rho.svg and kl_vs_rho.svg.
/// Returns the number of failed cells.
std::size_t cmd_sweep(const SweepOptions& opts);
/// Writes <csv stem>.svg and <csv stem>.manifest.json; the chart kind
/// follows the CSV header.
std::filesystem::path cmd_plot(const PlotOptions& opts);

/// Parses argv-style arguments (without the program name), runs the
/// command and maps failures to exit codes.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cape
