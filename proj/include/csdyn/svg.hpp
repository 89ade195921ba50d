#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

// Minimal self-contained SVG line charts; enough for per-stage error
// trajectories without pulling in a plotting dependency.

namespace csdyn {

struct ChartSeries {
  std::string label;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartOptions {
  std::string title;
  std::string x_label = "t";
  std::string y_label;
  bool log_y = false;
  int width = 720;
  int height = 480;
};

namespace detail {

inline std::string fmt_tick(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

inline std::vector<double> linear_ticks(double lo, double hi, int target = 6) {
  std::vector<double> ticks;
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    if (mag * m >= raw) {
      step = mag * m;
      break;
    }
  }
  for (double v = std::ceil(lo / step) * step; v <= hi + step * 1e-9;
       v += step)
    ticks.push_back(v);
  return ticks;
}

}  // namespace detail

/// Renders the series as an SVG document string. Non-finite points are
/// skipped; on a log axis non-positive points are skipped as well.
inline std::string svg_line_chart(const std::vector<ChartSeries>& series,
                                  const ChartOptions& opt = {}) {
  const double ml = 78, mr = 18, mt = 30, mb = 48;
  const double pw = opt.width - ml - mr, ph = opt.height - mt - mb;

  auto usable = [&](double v) {
    return std::isfinite(v) && (!opt.log_y || v > 0.0);
  };
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool any = false;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.y[i]) || !std::isfinite(s.x[i])) continue;
      const double yv = opt.log_y ? std::log10(s.y[i]) : s.y[i];
      if (!any) {
        xmin = xmax = s.x[i];
        ymin = ymax = yv;
        any = true;
      } else {
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, yv);
        ymax = std::max(ymax, yv);
      }
    }
  if (!any) {
    xmin = ymin = 0;
    xmax = ymax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) {
    const double v = opt.log_y ? std::log10(y) : y;
    return mt + ph - (v - ymin) / (ymax - ymin) * ph;
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width
      << "\" height=\"" << opt.height << "\" viewBox=\"0 0 " << opt.width
      << " " << opt.height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opt.title.empty())
    svg << "<text x=\"" << ml + pw / 2 << "\" y=\"18\" font-size=\"14\" "
        << "text-anchor=\"middle\" font-family=\"sans-serif\">" << opt.title
        << "</text>\n";

  // frame
  svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw
      << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"#444\"/>\n";

  // x ticks at integers when the span is small, else nice ticks
  std::vector<double> xticks;
  if (xmax - xmin <= 20 && std::floor(xmin) == xmin)
    for (double v = xmin; v <= xmax; v += std::max(1.0, std::floor((xmax - xmin) / 10)))
      xticks.push_back(v);
  else
    xticks = detail::linear_ticks(xmin, xmax);
  for (double v : xticks) {
    svg << "<line x1=\"" << px(v) << "\" y1=\"" << mt + ph << "\" x2=\""
        << px(v) << "\" y2=\"" << mt + ph + 4 << "\" stroke=\"#444\"/>\n";
    svg << "<text x=\"" << px(v) << "\" y=\"" << mt + ph + 18
        << "\" font-size=\"11\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\">" << detail::fmt_tick(v)
        << "</text>\n";
  }

  std::vector<double> yticks;
  if (opt.log_y) {
    for (double e = std::floor(ymin); e <= std::ceil(ymax); e += 1.0)
      if (e >= ymin - 1e-9 && e <= ymax + 1e-9) yticks.push_back(e);
    if (yticks.size() < 2) yticks = detail::linear_ticks(ymin, ymax);
  } else {
    yticks = detail::linear_ticks(ymin, ymax);
  }
  for (double v : yticks) {
    const double yy = mt + ph - (v - ymin) / (ymax - ymin) * ph;
    svg << "<line x1=\"" << ml - 4 << "\" y1=\"" << yy << "\" x2=\"" << ml
        << "\" y2=\"" << yy << "\" stroke=\"#444\"/>\n";
    svg << "<line x1=\"" << ml << "\" y1=\"" << yy << "\" x2=\"" << ml + pw
        << "\" y2=\"" << yy << "\" stroke=\"#eee\"/>\n";
    std::string label =
        opt.log_y ? ("1e" + detail::fmt_tick(v)) : detail::fmt_tick(v);
    svg << "<text x=\"" << ml - 8 << "\" y=\"" << yy + 4
        << "\" font-size=\"11\" text-anchor=\"end\" "
        << "font-family=\"sans-serif\">" << label << "</text>\n";
  }

  svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << opt.height - 10
      << "\" font-size=\"12\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\">" << opt.x_label << "</text>\n";
  if (!opt.y_label.empty())
    svg << "<text x=\"16\" y=\"" << mt + ph / 2
        << "\" font-size=\"12\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" transform=\"rotate(-90 16 "
        << mt + ph / 2 << ")\">" << opt.y_label << "</text>\n";

  for (const auto& s : series) {
    std::ostringstream pts;
    bool open = false;
    std::string paths;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.y[i])) {  // break the line at gaps
        if (open) {
          paths += "<polyline fill=\"none\" stroke=\"" + s.color +
                   "\" stroke-width=\"1.6\" points=\"" + pts.str() +
                   "\"/>\n";
          pts.str("");
          open = false;
        }
        continue;
      }
      pts << px(s.x[i]) << "," << py(s.y[i]) << " ";
      open = true;
    }
    if (open)
      paths += "<polyline fill=\"none\" stroke=\"" + s.color +
               "\" stroke-width=\"1.6\" points=\"" + pts.str() + "\"/>\n";
    svg << paths;
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (usable(s.y[i]))
        svg << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i])
            << "\" r=\"2.4\" fill=\"" << s.color << "\"/>\n";
  }

  double ly = mt + 14;
  for (const auto& s : series) {
    const double lx = ml + pw - 150;
    svg << "<line x1=\"" << lx << "\" y1=\"" << ly - 4 << "\" x2=\""
        << lx + 22 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << s.color
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << lx + 28 << "\" y=\"" << ly
        << "\" font-size=\"11\" font-family=\"sans-serif\">" << s.label
        << "</text>\n";
    ly += 16;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace csdyn
