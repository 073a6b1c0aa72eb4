#pragma once

#include <string>
#include <vector>

namespace vtb {

// Minimal SVG chart writer: line series and signed stacked bars on shared
// axes, with ticks, labels and a legend. Good enough for training curves and
// attribution reports; not a general plotting library.
class SvgPlot {
 public:
  SvgPlot(int width, int height, std::string title, std::string x_label,
          std::string y_label);

  void add_line(const std::string& label, const std::string& color,
                const std::vector<double>& x, const std::vector<double>& y);
  // One bar group per x position; positive components stack upward from zero
  // and negative ones downward, series by series.
  void add_stacked_bars(const std::vector<std::string>& labels,
                        const std::vector<std::string>& colors,
                        const std::vector<double>& x,
                        const std::vector<std::vector<double>>& series);

  std::string render() const;
  void save(const std::string& path) const;

 private:
  struct Line {
    std::string label, color;
    std::vector<double> x, y;
  };
  struct Bars {
    std::vector<std::string> labels, colors;
    std::vector<double> x;
    std::vector<std::vector<double>> series;  // [series][n]
  };

  int w_, h_;
  std::string title_, x_label_, y_label_;
  std::vector<Line> lines_;
  std::vector<Bars> bars_;
};

}  // namespace vtb
