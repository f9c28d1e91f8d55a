// Minimal SVG line charts for --plot.
#pragma once

#include <string>
#include <vector>

namespace arf::tools {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const std::vector<Series>& series);

void write_text_file(const std::string& path, const std::string& text);

}  // namespace arf::tools
