#include "cape/plots.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cape/errors.hpp"

namespace cape {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
constexpr const char* kBceColor = "#1f77b4";
constexpr const char* kCapeColor = "#d62728";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double or_nan(const std::optional<double>& v) { return v.value_or(kNaN); }

}  // namespace

Chart reliability_chart(const CsvTable& table) {
  const auto q_col = table.column("q");
  const auto p_col = table.column("p_emp");
  const auto count_col = table.column("count");
  Series points{.label = "bins", .color = kBceColor, .width = 1.5, .markers = true};
  for (const auto& row : table.rows) {
    const auto count = table.number(row, count_col);
    if (!count || *count <= 0) continue;
    points.x.push_back(or_nan(table.number(row, q_col)));
    points.y.push_back(or_nan(table.number(row, p_col)));
  }
  Chart chart{.title = "Reliability",
              .x_label = "mean predicted probability",
              .y_label = "empirical event rate"};
  chart.series.push_back(std::move(points));
  chart.x_range = std::pair{0.0, 1.0};
  chart.y_range = std::pair{0.0, 1.0};
  chart.diagonal = true;
  return chart;
}

std::vector<Chart> learning_curve_charts(const CsvTable& table) {
  const auto epoch_col = table.column("epoch");
  const auto phase_col = table.column("phase");
  struct Panel {
    const char* column;
    const char* title;
  };
  const Panel panels[] = {{"train_loss", "Training loss"},
                          {"val_loss", "Validation loss"},
                          {"brier", "Brier score"},
                          {"kl", "KL to true probability"}};

  std::optional<double> cape_start;
  for (const auto& row : table.rows) {
    if (row.cells[phase_col] == phase_name(Phase::kCape)) {
      const double e = or_nan(table.number(row, epoch_col));
      if (!cape_start || e - 1.0 < *cape_start) cape_start = e - 1.0;
    }
  }

  std::vector<Chart> charts;
  for (const auto& panel : panels) {
    const auto col = table.column(panel.column);
    Chart chart{.title = panel.title, .x_label = "epoch", .y_label = panel.column};
    for (Phase phase : {Phase::kWarmup, Phase::kCape}) {
      std::vector<double> x, y;
      for (const auto& row : table.rows) {
        if (row.cells[phase_col] != phase_name(phase)) continue;
        x.push_back(or_nan(table.number(row, epoch_col)));
        y.push_back(or_nan(table.number(row, col)));
      }
      if (x.empty()) continue;
      const bool cape = phase == Phase::kCape;
      const char* color = cape ? kCapeColor : kBceColor;
      const std::string label = cape ? "CaPE" : "BCE warm-up";
      chart.series.push_back(
          Series{.label = label + " (raw)", .x = x, .y = y, .color = color, .opacity = 0.3,
                 .width = 1.0, .in_legend = false});
      chart.series.push_back(
          Series{.label = label, .x = x, .y = moving_average(y, 3), .color = color});
    }
    if (cape_start) {
      chart.marker_x = *cape_start;
      chart.marker_label = "CaPE start";
    }
    charts.push_back(std::move(chart));
  }
  return charts;
}

Chart sweep_chart(const SweepReport& report, SweepMetric metric) {
  std::vector<std::size_t> sizes;
  std::vector<double> rhos;
  for (const auto& cell : report.cells) {
    if (std::find(sizes.begin(), sizes.end(), cell.n_samples) == sizes.end()) sizes.push_back(cell.n_samples);
    if (std::find(rhos.begin(), rhos.end(), cell.rho) == rhos.end()) rhos.push_back(cell.rho);
  }
  std::sort(rhos.begin(), rhos.end());

  auto value = [&](const CellReport& cell, Arm arm) {
    if (!cell.ok) return kNaN;
    const ArmSummary& s = arm == Arm::kCape ? cell.cape : cell.bce;
    return metric == SweepMetric::kEce ? s.ece_mean : or_nan(s.kl_mean);
  };

  Chart chart{.title = metric == SweepMetric::kEce ? "ECE vs event rate" : "KL vs event rate",
              .x_label = "event rate",
              .y_label = metric == SweepMetric::kEce ? "ECE" : "KL(true || predicted)"};
  for (std::size_t si = 0; si < sizes.size(); ++si) {
    const char* color = kPalette[si % std::size(kPalette)];
    for (Arm arm : {Arm::kCape, Arm::kBce}) {
      Series s{.label = std::string(arm == Arm::kCape ? "CaPE" : "BCE") + " n=" + std::to_string(sizes[si]),
               .color = color,
               .dashed = arm == Arm::kBce,
               .markers = true};
      for (double rho : rhos) {
        double y = kNaN;
        for (const auto& cell : report.cells) {
          if (cell.n_samples == sizes[si] && cell.rho == rho) y = value(cell, arm);
        }
        s.x.push_back(rho);
        s.y.push_back(y);
      }
      chart.series.push_back(std::move(s));
    }
  }
  return chart;
}

}  // namespace cape
