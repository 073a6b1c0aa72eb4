#include "vtbench/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "vtbench/io_util.hpp"

namespace vtb {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

double nice_tick(double span) {
  if (span <= 0) return 1.0;
  double raw = span / 5.0;
  double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double frac = raw / mag;
  double step = frac < 1.5 ? 1.0 : frac < 3.5 ? 2.0 : frac < 7.5 ? 5.0 : 10.0;
  return step * mag;
}

}  // namespace

SvgPlot::SvgPlot(int width, int height, std::string title, std::string x_label,
                 std::string y_label)
    : w_(width), h_(height), title_(std::move(title)),
      x_label_(std::move(x_label)), y_label_(std::move(y_label)) {
  if (width < 100 || height < 80) throw std::invalid_argument("plot too small");
}

void SvgPlot::add_line(const std::string& label, const std::string& color,
                       const std::vector<double>& x,
                       const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("line: |x| != |y|");
  lines_.push_back({label, color, x, y});
}

void SvgPlot::add_stacked_bars(const std::vector<std::string>& labels,
                               const std::vector<std::string>& colors,
                               const std::vector<double>& x,
                               const std::vector<std::vector<double>>& series) {
  if (labels.size() != series.size() || colors.size() != series.size())
    throw std::invalid_argument("stacked bars: labels/colors/series mismatch");
  for (const auto& s : series)
    if (s.size() != x.size())
      throw std::invalid_argument("stacked bars: series length != |x|");
  bars_.push_back({labels, colors, x, series});
}

std::string SvgPlot::render() const {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  auto see = [&](double x, double y) {
    if (std::isfinite(x)) { xmin = std::min(xmin, x); xmax = std::max(xmax, x); }
    if (std::isfinite(y)) { ymin = std::min(ymin, y); ymax = std::max(ymax, y); }
  };
  for (const auto& l : lines_)
    for (size_t i = 0; i < l.x.size(); ++i) see(l.x[i], l.y[i]);
  for (const auto& b : bars_)
    for (size_t i = 0; i < b.x.size(); ++i) {
      double up = 0, down = 0;
      for (const auto& s : b.series) (s[i] >= 0 ? up : down) += s[i];
      see(b.x[i], up);
      see(b.x[i], down);
      see(b.x[i], 0.0);
    }
  if (!std::isfinite(xmin)) { xmin = 0; xmax = 1; }
  if (!std::isfinite(ymin)) { ymin = 0; ymax = 1; }
  if (xmax - xmin < 1e-12) { xmin -= 0.5; xmax += 0.5; }
  if (ymax - ymin < 1e-12) { ymin -= 0.5; ymax += 0.5; }
  double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const double ml = 62, mr = 16, mt = 30, mb = 44;
  double pw = w_ - ml - mr, ph = h_ - mt - mb;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return h_ - mb - (y - ymin) / (ymax - ymin) * ph; };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w_) +
       "\" height=\"" + std::to_string(h_) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + fmt(w_ / 2.0) + "\" y=\"18\" font-size=\"13\" text-anchor=\"middle\" font-family=\"sans-serif\">" + title_ + "</text>\n";

  // axes + ticks
  double xstep = nice_tick(xmax - xmin), ystep = nice_tick(ymax - ymin);
  for (double t = std::ceil(xmin / xstep) * xstep; t <= xmax + 1e-9 * xstep; t += xstep) {
    double X = px(t);
    s += "<line x1=\"" + fmt(X) + "\" y1=\"" + fmt(h_ - mb) + "\" x2=\"" + fmt(X) +
         "\" y2=\"" + fmt(mt) + "\" stroke=\"#e0e0e0\"/>\n";
    s += "<text x=\"" + fmt(X) + "\" y=\"" + fmt(h_ - mb + 16) +
         "\" font-size=\"10\" text-anchor=\"middle\" font-family=\"sans-serif\">" + fmt(t) + "</text>\n";
  }
  for (double t = std::ceil(ymin / ystep) * ystep; t <= ymax + 1e-9 * ystep; t += ystep) {
    double Y = py(t);
    s += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(Y) + "\" x2=\"" + fmt(w_ - mr) +
         "\" y2=\"" + fmt(Y) + "\" stroke=\"#e0e0e0\"/>\n";
    s += "<text x=\"" + fmt(ml - 6) + "\" y=\"" + fmt(Y + 3) +
         "\" font-size=\"10\" text-anchor=\"end\" font-family=\"sans-serif\">" + fmt(t) + "</text>\n";
  }
  s += "<rect x=\"" + fmt(ml) + "\" y=\"" + fmt(mt) + "\" width=\"" + fmt(pw) +
       "\" height=\"" + fmt(ph) + "\" fill=\"none\" stroke=\"black\"/>\n";
  s += "<text x=\"" + fmt(ml + pw / 2) + "\" y=\"" + fmt(h_ - 8.0) +
       "\" font-size=\"11\" text-anchor=\"middle\" font-family=\"sans-serif\">" + x_label_ + "</text>\n";
  s += "<text x=\"14\" y=\"" + fmt(mt + ph / 2) +
       "\" font-size=\"11\" text-anchor=\"middle\" font-family=\"sans-serif\" transform=\"rotate(-90 14 " +
       fmt(mt + ph / 2) + ")\">" + y_label_ + "</text>\n";

  // bars first so lines draw on top
  for (const auto& b : bars_) {
    size_t n = b.x.size();
    double bw = n > 1 ? 0.8 * pw / static_cast<double>(n) : 0.8 * pw;
    for (size_t i = 0; i < n; ++i) {
      double up = 0, down = 0;
      for (size_t k = 0; k < b.series.size(); ++k) {
        double v = b.series[k][i];
        if (v == 0 || !std::isfinite(v)) continue;
        double base = v > 0 ? up : down;
        double y0 = py(base), y1 = py(base + v);
        if (v > 0) up += v; else down += v;
        s += "<rect x=\"" + fmt(px(b.x[i]) - bw / 2) + "\" y=\"" + fmt(std::min(y0, y1)) +
             "\" width=\"" + fmt(bw) + "\" height=\"" + fmt(std::fabs(y1 - y0)) +
             "\" fill=\"" + b.colors[k] + "\"/>\n";
      }
    }
  }
  for (const auto& l : lines_) {
    std::string pts;
    for (size_t i = 0; i < l.x.size(); ++i) {
      if (!std::isfinite(l.x[i]) || !std::isfinite(l.y[i])) continue;
      pts += fmt(px(l.x[i])) + "," + fmt(py(l.y[i])) + " ";
    }
    s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + l.color +
         "\" stroke-width=\"1.4\"/>\n";
  }

  // legend
  double ly = mt + 6;
  auto legend_entry = [&](const std::string& label, const std::string& color) {
    s += "<rect x=\"" + fmt(w_ - mr - 130.0) + "\" y=\"" + fmt(ly) +
         "\" width=\"10\" height=\"10\" fill=\"" + color + "\"/>\n";
    s += "<text x=\"" + fmt(w_ - mr - 116.0) + "\" y=\"" + fmt(ly + 9) +
         "\" font-size=\"10\" font-family=\"sans-serif\">" + label + "</text>\n";
    ly += 14;
  };
  for (const auto& l : lines_) legend_entry(l.label, l.color);
  for (const auto& b : bars_)
    for (size_t k = 0; k < b.labels.size(); ++k) legend_entry(b.labels[k], b.colors[k]);

  s += "</svg>\n";
  return s;
}

void SvgPlot::save(const std::string& path) const { write_text_file(path, render()); }

}  // namespace vtb
