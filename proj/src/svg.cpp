#include "cape/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace cape {
namespace {

constexpr double kViewWidth = 800.0;
constexpr double kViewHeight = 600.0;

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  if (std::abs(v) < 1e-12) v = 0.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Rect {
  double x, y, w, h;
};

std::pair<double, double> data_range(const Chart& chart, bool x_axis) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : chart.series) {
    for (double v : x_axis ? s.x : s.y) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (x_axis && chart.marker_x) {
    lo = std::min(lo, *chart.marker_x);
    hi = std::max(hi, *chart.marker_x);
  }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (hi - lo < 1e-12) {
    const double pad = std::max(1e-3, std::abs(lo) * 0.05);
    return {lo - pad, hi + pad};
  }
  return {lo, hi};
}

void render_chart(std::ostringstream& out, const Chart& chart, Rect area) {
  const Rect plot{area.x + 62, area.y + 32, area.w - 80, area.h - 82};
  auto [x_lo, x_hi] = chart.x_range.value_or(data_range(chart, true));
  auto [y_lo, y_hi] = chart.y_range.value_or(data_range(chart, false));
  const auto xt = nice_ticks(x_lo, x_hi);
  const auto yt = nice_ticks(y_lo, y_hi);
  if (!chart.x_range) {
    x_lo = std::min(x_lo, xt.front());
    x_hi = std::max(x_hi, xt.back());
  }
  if (!chart.y_range) {
    y_lo = std::min(y_lo, yt.front());
    y_hi = std::max(y_hi, yt.back());
  }
  auto sx = [&](double v) { return plot.x + (v - x_lo) / (x_hi - x_lo) * plot.w; };
  auto sy = [&](double v) { return plot.y + plot.h - (v - y_lo) / (y_hi - y_lo) * plot.h; };

  out << "<g>\n";
  out << "<text x=\"" << num(area.x + area.w / 2) << "\" y=\"" << num(area.y + 20)
      << "\" text-anchor=\"middle\" font-size=\"15\" font-weight=\"bold\">" << escape(chart.title)
      << "</text>\n";
  out << "<rect x=\"" << num(plot.x) << "\" y=\"" << num(plot.y) << "\" width=\"" << num(plot.w)
      << "\" height=\"" << num(plot.h) << "\" fill=\"none\" stroke=\"#333\" stroke-width=\"1\"/>\n";

  for (double t : xt) {
    if (t < x_lo - 1e-12 || t > x_hi + 1e-12) continue;
    const double px = sx(t);
    out << "<line x1=\"" << num(px) << "\" y1=\"" << num(plot.y + plot.h) << "\" x2=\"" << num(px)
        << "\" y2=\"" << num(plot.y + plot.h + 5) << "\" stroke=\"#333\"/>\n";
    out << "<text x=\"" << num(px) << "\" y=\"" << num(plot.y + plot.h + 18)
        << "\" text-anchor=\"middle\" font-size=\"11\">" << tick_label(t) << "</text>\n";
  }
  for (double t : yt) {
    if (t < y_lo - 1e-12 || t > y_hi + 1e-12) continue;
    const double py = sy(t);
    out << "<line x1=\"" << num(plot.x - 5) << "\" y1=\"" << num(py) << "\" x2=\"" << num(plot.x)
        << "\" y2=\"" << num(py) << "\" stroke=\"#333\"/>\n";
    out << "<line x1=\"" << num(plot.x) << "\" y1=\"" << num(py) << "\" x2=\"" << num(plot.x + plot.w)
        << "\" y2=\"" << num(py) << "\" stroke=\"#ddd\" stroke-width=\"0.5\"/>\n";
    out << "<text x=\"" << num(plot.x - 8) << "\" y=\"" << num(py + 4)
        << "\" text-anchor=\"end\" font-size=\"11\">" << tick_label(t) << "</text>\n";
  }
  out << "<text x=\"" << num(plot.x + plot.w / 2) << "\" y=\"" << num(plot.y + plot.h + 38)
      << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(chart.x_label) << "</text>\n";
  const double ylx = area.x + 14;
  const double yly = plot.y + plot.h / 2;
  out << "<text x=\"" << num(ylx) << "\" y=\"" << num(yly) << "\" text-anchor=\"middle\" font-size=\"12\""
      << " transform=\"rotate(-90 " << num(ylx) << ' ' << num(yly) << ")\">" << escape(chart.y_label)
      << "</text>\n";

  if (chart.diagonal) {
    const double lo = std::max(x_lo, y_lo);
    const double hi = std::min(x_hi, y_hi);
    out << "<line x1=\"" << num(sx(lo)) << "\" y1=\"" << num(sy(lo)) << "\" x2=\"" << num(sx(hi))
        << "\" y2=\"" << num(sy(hi)) << "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
  }
  if (chart.marker_x) {
    const double px = sx(*chart.marker_x);
    out << "<line x1=\"" << num(px) << "\" y1=\"" << num(plot.y) << "\" x2=\"" << num(px) << "\" y2=\""
        << num(plot.y + plot.h) << "\" stroke=\"#000\" stroke-width=\"1.5\"/>\n";
    if (!chart.marker_label.empty()) {
      out << "<text x=\"" << num(px + 4) << "\" y=\"" << num(plot.y + 14) << "\" font-size=\"11\">"
          << escape(chart.marker_label) << "</text>\n";
    }
  }

  for (const auto& s : chart.series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("series '" + s.label + "': x/y length mismatch");
    out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"" << num(s.width)
        << "\" stroke-opacity=\"" << num(s.opacity) << '"';
    if (s.dashed) out << " stroke-dasharray=\"8 5\"";
    out << " points=\"";
    bool first = true;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      out << (first ? "" : " ") << num(sx(s.x[i])) << ',' << num(sy(s.y[i]));
      first = false;
    }
    out << "\"/>\n";
    if (s.markers) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        out << "<circle cx=\"" << num(sx(s.x[i])) << "\" cy=\"" << num(sy(s.y[i]))
            << "\" r=\"3.5\" fill=\"" << s.color << "\"/>\n";
      }
    }
  }

  double ly = plot.y + 12;
  for (const auto& s : chart.series) {
    if (!s.in_legend) continue;
    const double lx = plot.x + plot.w - 150;
    out << "<line x1=\"" << num(lx) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(lx + 24) << "\" y2=\""
        << num(ly) << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"";
    if (s.dashed) out << " stroke-dasharray=\"8 5\"";
    out << "/>\n";
    out << "<text x=\"" << num(lx + 30) << "\" y=\"" << num(ly + 4) << "\" font-size=\"11\">"
        << escape(s.label) << "</text>\n";
    ly += 15;
  }
  out << "</g>\n";
}

}  // namespace

std::vector<double> nice_ticks(double lo, double hi, std::size_t target) {
  if (!(hi > lo)) hi = lo + 1.0;
  const double raw = (hi - lo) / static_cast<double>(std::max<std::size_t>(target, 1));
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> ticks;
  const double first = std::floor(lo / step + 1e-9) * step;
  for (double t = first; t <= hi + step * 1e-9 || ticks.size() < 2; t += step) {
    ticks.push_back(std::abs(t) < step * 1e-9 ? 0.0 : t);
    if (ticks.size() > 50) break;
  }
  if (ticks.back() < hi) ticks.push_back(ticks.back() + step);
  return ticks;
}

std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  if (window == 0) throw std::invalid_argument("moving_average: window must be positive");
  const std::size_t half = window / 2;
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(values.size(), i + window - half);
    double acc = 0.0;
    for (std::size_t j = lo; j < hi; ++j) acc += values[j];
    out[i] = acc / static_cast<double>(hi - lo);
  }
  return out;
}

std::string render_svg(std::span<const Chart> charts, std::size_t columns) {
  if (charts.empty()) throw std::invalid_argument("render_svg: no charts");
  columns = std::clamp<std::size_t>(columns, 1, charts.size());
  const std::size_t rows = (charts.size() + columns - 1) / columns;
  const double cell_w = kViewWidth / static_cast<double>(columns);
  const double cell_h = kViewHeight / static_cast<double>(rows);

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 600\" width=\"800\" height=\"600\""
      << " font-family=\"sans-serif\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"600\" fill=\"#fff\"/>\n";
  for (std::size_t i = 0; i < charts.size(); ++i) {
    const Rect area{cell_w * static_cast<double>(i % columns), cell_h * static_cast<double>(i / columns),
                    cell_w, cell_h};
    render_chart(out, charts[i], area);
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace cape
