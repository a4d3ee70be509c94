#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cape/calibration.hpp"
#include "cape/pipeline.hpp"

namespace cape {

/// Shortest round-trip decimal form of a double.
std::string format_number(double value);
/// "NA" for a missing value.
std::string format_optional(const std::optional<double>& value);

// Column layouts of every emitted CSV file.
inline constexpr std::string_view kEpochCsvHeader = "epoch,phase,train_loss,val_loss,brier,kl";
inline constexpr std::string_view kSweepCsvHeader = "rho,n,fold,arm,ece,brier,kl,stop_epoch";
inline constexpr std::string_view kReliabilityCsvHeader = "bin,q_lo,q_hi,count,q,p_emp";
inline constexpr std::string_view kMetricsCsvHeader = "n_pixels,bins,ece,brier,kl";
inline constexpr std::string_view kArmMetricsCsvHeader = "arm,n_pixels,bins,ece,brier,kl";
inline constexpr std::string_view kSummaryCsvHeader =
    "rho,n,arm,status,ece_mean,ece_std,brier_mean,brier_std,kl_mean,kl_std";

std::string epoch_csv(std::span<const EpochRecord> records);
std::string reliability_csv(const BinTable& table);
std::string metrics_csv(const MetricsReport& report);
/// Test-split metrics of both arms of one training run.
std::string arm_metrics_csv(const MetricsReport& bce, const MetricsReport& cape);
/// One row per fold and arm; failed cells contribute rows with NA metrics.
std::string sweep_csv(const SweepReport& report, std::size_t folds);
std::string sweep_summary_csv(const SweepReport& report);

/// Parsed CSV: header plus rows, each row with its 1-based source line.
struct CsvTable {
  std::vector<std::string> header;
  struct Row {
    int line = 0;
    std::vector<std::string> cells;
  };
  std::vector<Row> rows;

  /// Column index by name; throws FormatError when absent.
  std::size_t column(std::string_view name) const;
  /// Numeric cell; "NA" yields nullopt. Throws FormatError naming the line.
  std::optional<double> number(const Row& row, std::size_t col) const;
};

/// Throws FormatError with the offending line number on ragged rows.
CsvTable parse_csv(const std::string& text);

}  // namespace cape
