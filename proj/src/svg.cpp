#include "eills/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "eills/errors.hpp"

namespace eills {
namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#ff7f0e", "#2ca02c",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

struct Axis {
  bool log = false;
  double lo = 0.0, hi = 1.0;  // transformed range

  double transform(double v) const { return log ? std::log10(v) : v; }
  double unit(double v) const {
    const double t = transform(v);
    return hi > lo ? (t - lo) / (hi - lo) : 0.5;
  }
};

Axis fit_axis(const std::vector<Series>& series, bool log, bool use_x) {
  Axis axis;
  axis.log = log;
  axis.lo = std::numeric_limits<double>::infinity();
  axis.hi = -std::numeric_limits<double>::infinity();
  for (const auto& s : series) {
    for (double v : (use_x ? s.x : s.y)) {
      if (log && v <= 0.0) {
        throw DataError("log axis requires strictly positive values");
      }
      const double t = log ? std::log10(v) : v;
      axis.lo = std::min(axis.lo, t);
      axis.hi = std::max(axis.hi, t);
    }
  }
  if (axis.lo == axis.hi) {
    axis.lo -= 0.5;
    axis.hi += 0.5;
  }
  return axis;
}

}  // namespace

void emit_svg(const std::vector<Series>& series, const AxesConfig& axes, std::ostream& out) {
  if (series.empty()) throw DataError("no series to plot");
  for (const auto& s : series) {
    if (s.x.empty() || s.x.size() != s.y.size()) {
      throw DataError("series '" + s.name + "' is empty or ragged");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        throw DataError("series '" + s.name + "' contains a non-finite point");
      }
    }
  }

  const Axis xa = fit_axis(series, axes.log_x, true);
  const Axis ya = fit_axis(series, axes.log_y, false);

  const double ml = 64, mr = 140, mt = 36, mb = 48;
  const double pw = axes.width - ml - mr;
  const double ph = axes.height - mt - mb;
  auto px = [&](double v) { return ml + xa.unit(v) * pw; };
  auto py = [&](double v) { return mt + (1.0 - ya.unit(v)) * ph; };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << axes.width << "\" height=\""
      << axes.height << "\" viewBox=\"0 0 " << axes.width << " " << axes.height << "\">\n";
  out << "<rect width=\"" << axes.width << "\" height=\"" << axes.height
      << "\" fill=\"white\"/>\n";
  if (!axes.title.empty()) {
    out << "<text x=\"" << fmt(ml + pw / 2) << "\" y=\"20\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"14\">" << axes.title << "</text>\n";
  }
  out << "<rect x=\"" << fmt(ml) << "\" y=\"" << fmt(mt) << "\" width=\"" << fmt(pw)
      << "\" height=\"" << fmt(ph) << "\" fill=\"none\" stroke=\"#333333\"/>\n";

  const int ticks = 5;
  for (int t = 0; t <= ticks; ++t) {
    const double fx = xa.lo + (xa.hi - xa.lo) * t / ticks;
    const double vx = xa.log ? std::pow(10.0, fx) : fx;
    out << "<line x1=\"" << fmt(px(vx)) << "\" y1=\"" << fmt(mt + ph) << "\" x2=\""
        << fmt(px(vx)) << "\" y2=\"" << fmt(mt + ph + 5) << "\" stroke=\"#333333\"/>\n";
    out << "<text x=\"" << fmt(px(vx)) << "\" y=\"" << fmt(mt + ph + 18)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
        << fmt_label(vx) << "</text>\n";
    const double fy = ya.lo + (ya.hi - ya.lo) * t / ticks;
    const double vy = ya.log ? std::pow(10.0, fy) : fy;
    out << "<line x1=\"" << fmt(ml - 5) << "\" y1=\"" << fmt(py(vy)) << "\" x2=\"" << fmt(ml)
        << "\" y2=\"" << fmt(py(vy)) << "\" stroke=\"#333333\"/>\n";
    out << "<text x=\"" << fmt(ml - 8) << "\" y=\"" << fmt(py(vy) + 3)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
        << fmt_label(vy) << "</text>\n";
  }
  if (!axes.x_label.empty()) {
    out << "<text x=\"" << fmt(ml + pw / 2) << "\" y=\"" << fmt(mt + ph + 36)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">"
        << axes.x_label << "</text>\n";
  }
  if (!axes.y_label.empty()) {
    out << "<text x=\"16\" y=\"" << fmt(mt + ph / 2)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
        << "transform=\"rotate(-90 16 " << fmt(mt + ph / 2) << ")\">" << axes.y_label
        << "</text>\n";
  }

  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % (sizeof(kPalette) / sizeof(kPalette[0]))];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < series[k].x.size(); ++i) {
      if (i > 0) out << ' ';
      out << fmt(px(series[k].x[i])) << ',' << fmt(py(series[k].y[i]));
    }
    out << "\"/>\n";
    const double ly = mt + 14 + 16 * static_cast<double>(k);
    out << "<line x1=\"" << fmt(ml + pw + 8) << "\" y1=\"" << fmt(ly - 4) << "\" x2=\""
        << fmt(ml + pw + 28) << "\" y2=\"" << fmt(ly - 4) << "\" stroke=\"" << color
        << "\" stroke-width=\"1.5\"/>\n";
    out << "<text x=\"" << fmt(ml + pw + 32) << "\" y=\"" << fmt(ly)
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << series[k].name << "</text>\n";
  }
  out << "</svg>\n";
}

void emit_svg(const std::vector<Series>& series, const AxesConfig& axes,
              const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  emit_svg(series, axes, out);
}

}  // namespace eills
