#pragma once

#include <string>
#include <vector>

#include "fino/tensor.hpp"

namespace fino {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Self-contained SVG line chart. With log_y, non-positive values are dropped.
std::string svg_line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                          const std::vector<Series>& series, bool log_y = false);

/// Self-contained SVG heatmap of an (H, W) field on a blue-white-red scale
/// symmetric about zero (or spanning [min, max] when the field is one-signed).
std::string svg_heatmap(const std::string& title, const Tensor<double>& field);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

/// Escapes &, <, >, " for XML text and attributes.
std::string xml_escape(const std::string& s);

}  // namespace fino
