#pragma once

// Small SVG emitters for the report figures.

#include "essential/metrics.hpp"

#include <string>
#include <vector>

namespace essential {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

std::string render_line_chart(const LineChart& chart);
std::string render_confusion_heatmap(const ConfusionMatrix& m, const std::string& title);

// Writes `content` to `path`, throwing Error(Io) on failure.
void write_text_file(const std::string& path, const std::string& content);

}  // namespace essential
