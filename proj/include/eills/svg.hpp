#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace eills {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct AxesConfig {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  int width = 720;
  int height = 480;
};

/// Writes a standalone SVG line chart: one polyline per series plus a legend.
/// Output is byte-deterministic. Throws DataError on empty or non-finite
/// input, or on nonpositive values under a log axis.
void emit_svg(const std::vector<Series>& series, const AxesConfig& axes, std::ostream& out);
void emit_svg(const std::vector<Series>& series, const AxesConfig& axes,
              const std::filesystem::path& path);

}  // namespace eills
