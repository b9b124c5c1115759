#pragma once

#include <string>
#include <vector>

namespace dpinn::cli::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Static SVG line chart with axes, ticks and a legend. With log_y the
// values must be positive.
std::string line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                       const std::vector<Series>& series, bool log_y);

}  // namespace dpinn::cli::plot
