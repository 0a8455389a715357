// Copyright 2026 GeCo Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "geco/common.hpp"

namespace geco {

// Static SVG line plots for ROC curves and training logs. No styling beyond
// what a quick look at a run needs.

struct SvgSeries {
  std::string label;
  std::vector<double> xs;
  std::vector<double> ys;
};

inline void write_svg_plot(const std::string& path, const std::string& title,
                           const std::string& xlabel, const std::string& ylabel,
                           const std::vector<SvgSeries>& series, int width = 640,
                           int height = 480) {
  if (series.empty()) throw InvalidArgument("write_svg_plot: no series");
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    if (s.xs.size() != s.ys.size() || s.xs.empty())
      throw InvalidArgument("write_svg_plot: series " + s.label + " is empty or ragged");
    for (size_t i = 0; i < s.xs.size(); ++i) {
      xmin = std::min(xmin, s.xs[i]);
      xmax = std::max(xmax, s.xs[i]);
      ymin = std::min(ymin, s.ys[i]);
      ymax = std::max(ymax, s.ys[i]);
    }
  }
  if (xmax - xmin < 1e-12) { xmax = xmin + 1.0; }
  if (ymax - ymin < 1e-12) { ymax = ymin + 1.0; }

  const double ml = 60, mr = 20, mt = 40, mb = 50;
  const double pw = width - ml - mr, ph = height - mt - mb;
  auto px = [&](double x) { return ml + pw * (x - xmin) / (xmax - xmin); };
  auto py = [&](double y) { return mt + ph * (1.0 - (y - ymin) / (ymax - ymin)); };

  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  const int n_colors = 8;

  std::ofstream f(path);
  if (!f) throw IoError("cannot write plot: " + path);
  f << strformat("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                 "viewBox=\"0 0 %d %d\">\n",
                 width, height, width, height);
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  f << strformat("<text x=\"%d\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" "
                 "text-anchor=\"middle\">%s</text>\n",
                 width / 2, title.c_str());
  // axes
  f << strformat("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", ml,
                 mt + ph, ml + pw, mt + ph);
  f << strformat("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", ml,
                 mt, ml, mt + ph);
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 4.0;
    const double fy = ymin + (ymax - ymin) * i / 4.0;
    f << strformat("<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\" "
                   "text-anchor=\"middle\">%.4g</text>\n",
                   px(fx), mt + ph + 18, fx);
    f << strformat("<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\" "
                   "text-anchor=\"end\">%.4g</text>\n",
                   ml - 6, py(fy) + 4, fy);
    f << strformat("<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#dddddd\"/>\n",
                   ml, py(fy), ml + pw, py(fy));
  }
  f << strformat("<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" font-size=\"13\" "
                 "text-anchor=\"middle\">%s</text>\n",
                 width / 2, height - 12, xlabel.c_str());
  f << strformat("<text x=\"16\" y=\"%d\" font-family=\"sans-serif\" font-size=\"13\" "
                 "text-anchor=\"middle\" transform=\"rotate(-90 16 %d)\">%s</text>\n",
                 height / 2, height / 2, ylabel.c_str());

  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kColors[si % n_colors];
    std::string pts;
    for (size_t i = 0; i < s.xs.size(); ++i)
      pts += strformat("%.2f,%.2f ", px(s.xs[i]), py(s.ys[i]));
    f << strformat("<polyline fill=\"none\" stroke=\"%s\" stroke-width=\"1.5\" points=\"%s\"/>\n",
                   color, pts.c_str());
    f << strformat("<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"12\" "
                   "fill=\"%s\">%s</text>\n",
                   ml + pw - 150.0, mt + 16.0 + 16.0 * static_cast<double>(si), color,
                   s.label.c_str());
  }
  f << "</svg>\n";
  if (!f) throw IoError("short write on plot: " + path);
}

}  // namespace geco
