#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cape {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
  bool dashed = false;
  double opacity = 1.0;
  double width = 2.0;
  bool markers = false;
  bool in_legend = true;
};

/// One set of axes. Each series renders as exactly one <polyline>; NaN
/// points are skipped.
struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::optional<std::pair<double, double>> x_range;
  std::optional<std::pair<double, double>> y_range;
  bool diagonal = false;              // y = x reference line
  std::optional<double> marker_x;     // vertical marker line
  std::string marker_label;
};

/// Renders the charts in a grid inside a fixed 800x600 viewBox.
std::string render_svg(std::span<const Chart> charts, std::size_t columns = 1);
inline std::string render_svg(const Chart& chart) { return render_svg(std::span(&chart, 1)); }

/// Tick positions covering [lo, hi] at a 1/2/5 x 10^k step.
std::vector<double> nice_ticks(double lo, double hi, std::size_t target = 5);

/// Centered moving average; windows shrink at the series ends.
std::vector<double> moving_average(std::span<const double> values, std::size_t window = 3);

}  // namespace cape
