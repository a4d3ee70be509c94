#include "cape/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <sstream>

#include "cape/errors.hpp"

namespace cape {
namespace {

std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.emplace_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

}  // namespace

std::string format_number(double value) {
  if (std::isnan(value)) return "NA";
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), res.ptr);
}

std::string format_optional(const std::optional<double>& value) {
  return value ? format_number(*value) : std::string("NA");
}

std::string epoch_csv(std::span<const EpochRecord> records) {
  std::ostringstream out;
  out << kEpochCsvHeader << '\n';
  for (const auto& r : records) {
    out << r.epoch << ',' << phase_name(r.phase) << ',' << format_number(r.train_loss) << ','
        << format_number(r.val_loss) << ',' << format_number(r.brier) << ','
        << format_optional(r.kl_true) << '\n';
  }
  return out.str();
}

std::string reliability_csv(const BinTable& table) {
  std::ostringstream out;
  out << kReliabilityCsvHeader << '\n';
  for (std::size_t b = 0; b < table.bins(); ++b) {
    out << b + 1 << ',' << format_number(table.edges[b]) << ',' << format_number(table.edges[b + 1])
        << ',' << table.count[b] << ',' << format_number(table.q[b]) << ','
        << format_number(table.p_emp[b]) << '\n';
  }
  return out.str();
}

std::string metrics_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << kMetricsCsvHeader << '\n'
      << report.n_pixels << ',' << report.bins.bins() << ',' << format_number(report.ece) << ','
      << format_number(report.brier) << ',' << format_optional(report.kl_true) << '\n';
  return out.str();
}

std::string arm_metrics_csv(const MetricsReport& bce, const MetricsReport& cape) {
  std::ostringstream out;
  out << kArmMetricsCsvHeader << '\n';
  for (Arm arm : {Arm::kBce, Arm::kCape}) {
    const MetricsReport& m = arm == Arm::kBce ? bce : cape;
    out << arm_name(arm) << ',' << m.n_pixels << ',' << m.bins.bins() << ',' << format_number(m.ece) << ','
        << format_number(m.brier) << ',' << format_optional(m.kl_true) << '\n';
  }
  return out.str();
}

std::string sweep_csv(const SweepReport& report, std::size_t folds) {
  std::ostringstream out;
  out << kSweepCsvHeader << '\n';
  for (const auto& cell : report.cells) {
    const std::string prefix = format_number(cell.rho) + ',' + std::to_string(cell.n_samples) + ',';
    if (!cell.ok) {
      for (std::size_t f = 0; f < folds; ++f) {
        for (Arm arm : {Arm::kBce, Arm::kCape}) {
          out << prefix << f << ',' << arm_name(arm) << ",NA,NA,NA,NA\n";
        }
      }
      continue;
    }
    for (const auto& fold : cell.folds) {
      for (Arm arm : {Arm::kBce, Arm::kCape}) {
        const MetricsReport& m = arm == Arm::kBce ? fold.bce : fold.cape;
        const std::size_t epoch = arm == Arm::kBce ? fold.best_epoch : fold.final_epoch;
        out << prefix << fold.rotation << ',' << arm_name(arm) << ',' << format_number(m.ece) << ','
            << format_number(m.brier) << ',' << format_optional(m.kl_true) << ',' << epoch << '\n';
      }
    }
  }
  return out.str();
}

std::string sweep_summary_csv(const SweepReport& report) {
  std::ostringstream out;
  out << kSummaryCsvHeader << '\n';
  for (const auto& cell : report.cells) {
    for (Arm arm : {Arm::kBce, Arm::kCape}) {
      out << format_number(cell.rho) << ',' << cell.n_samples << ',' << arm_name(arm) << ',';
      if (!cell.ok) {
        out << "failed,NA,NA,NA,NA,NA,NA\n";
        continue;
      }
      const ArmSummary& s = arm == Arm::kBce ? cell.bce : cell.cape;
      out << "ok," << format_number(s.ece_mean) << ',' << format_number(s.ece_std) << ','
          << format_number(s.brier_mean) << ',' << format_number(s.brier_std) << ','
          << format_optional(s.kl_mean) << ',' << format_optional(s.kl_std) << '\n';
    }
  }
  return out.str();
}

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw FormatError("csv: missing column '" + std::string(name) + "'");
}

std::optional<double> CsvTable::number(const Row& row, std::size_t col) const {
  const std::string& cell = row.cells.at(col);
  if (cell == "NA") return std::nullopt;
  double value = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
    throw FormatError("csv line " + std::to_string(row.line) + ": column '" + header.at(col) +
                      "' is not a number: '" + cell + "'");
  }
  return value;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (table.header.empty()) {
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw FormatError("csv line " + std::to_string(line_no) + ": expected " +
                        std::to_string(table.header.size()) + " fields, found " +
                        std::to_string(cells.size()));
    }
    table.rows.push_back({line_no, std::move(cells)});
  }
  if (table.header.empty()) throw FormatError("csv: empty input");
  return table;
}

}  // namespace cape
