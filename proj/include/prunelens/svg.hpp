#pragma once

// Minimal log-log line charts with optional min/max bands, written as SVG.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace prunelens::svg {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Series {
  std::string name;
  std::vector<Point> line;
  // Optional band; lower[k] and upper[k] share an x.
  std::vector<Point> lower;
  std::vector<Point> upper;
  bool dashed = false;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  bool diagonal = false;  // reference line y = x
  int width = 720;
  int height = 480;
};

namespace detail {

inline const char* palette(std::size_t k) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors[k % 10];
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline bool plottable(const Point& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && p.x > 0.0 && p.y > 0.0;
}

} // namespace detail

inline std::string render(const Chart& chart) {
  const double left = 70, right = 170, top = 40, bottom = 55;
  const double pw = chart.width - left - right;
  const double ph = chart.height - top - bottom;

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  auto extend = [&](const Point& p) {
    if (!detail::plottable(p)) return;
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  };
  for (const Series& s : chart.series) {
    for (const auto& p : s.line) extend(p);
    for (const auto& p : s.lower) extend(p);
    for (const auto& p : s.upper) extend(p);
  }
  if (!std::isfinite(xmin)) xmin = ymin = 1.0, xmax = ymax = 10.0;
  // Snap to whole decades, at least one decade wide.
  const double lx0 = std::floor(std::log10(xmin)), lx1 = std::max(std::ceil(std::log10(xmax)), lx0 + 1);
  const double ly0 = std::floor(std::log10(ymin)), ly1 = std::max(std::ceil(std::log10(ymax)), ly0 + 1);
  auto sx = [&](double x) { return left + (std::log10(x) - lx0) / (lx1 - lx0) * pw; };
  auto sy = [&](double y) { return top + ph - (std::log10(y) - ly0) / (ly1 - ly0) * ph; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << chart.width << "\" height=\""
      << chart.height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << detail::num(left + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << detail::escape(chart.title) << "</text>\n";

  for (double d = lx0; d <= lx1; d += 1) {
    const double x = left + (d - lx0) / (lx1 - lx0) * pw;
    out << "<line x1=\"" << detail::num(x) << "\" y1=\"" << detail::num(top) << "\" x2=\"" << detail::num(x)
        << "\" y2=\"" << detail::num(top + ph) << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << detail::num(x) << "\" y=\"" << detail::num(top + ph + 18)
        << "\" text-anchor=\"middle\">1e" << static_cast<int>(d) << "</text>\n";
  }
  for (double d = ly0; d <= ly1; d += 1) {
    const double y = top + ph - (d - ly0) / (ly1 - ly0) * ph;
    out << "<line x1=\"" << detail::num(left) << "\" y1=\"" << detail::num(y) << "\" x2=\""
        << detail::num(left + pw) << "\" y2=\"" << detail::num(y) << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << detail::num(left - 8) << "\" y=\"" << detail::num(y + 4)
        << "\" text-anchor=\"end\">1e" << static_cast<int>(d) << "</text>\n";
  }
  out << "<rect x=\"" << detail::num(left) << "\" y=\"" << detail::num(top) << "\" width=\"" << detail::num(pw)
      << "\" height=\"" << detail::num(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";
  out << "<text x=\"" << detail::num(left + pw / 2) << "\" y=\"" << chart.height - 12
      << "\" text-anchor=\"middle\">" << detail::escape(chart.x_label) << "</text>\n";
  out << "<text transform=\"translate(18 " << detail::num(top + ph / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">" << detail::escape(chart.y_label) << "</text>\n";

  if (chart.diagonal) {
    const double lo = std::pow(10.0, std::max(lx0, ly0));
    const double hi = std::pow(10.0, std::min(lx1, ly1));
    if (lo < hi) {
      out << "<line x1=\"" << detail::num(sx(lo)) << "\" y1=\"" << detail::num(sy(lo)) << "\" x2=\""
          << detail::num(sx(hi)) << "\" y2=\"" << detail::num(sy(hi))
          << "\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>\n";
    }
  }

  for (std::size_t k = 0; k < chart.series.size(); ++k) {
    const Series& s = chart.series[k];
    const char* color = detail::palette(k);
    if (!s.lower.empty() && s.lower.size() == s.upper.size()) {
      std::ostringstream pts;
      for (const auto& p : s.upper) {
        if (detail::plottable(p)) pts << detail::num(sx(p.x)) << ',' << detail::num(sy(p.y)) << ' ';
      }
      for (auto it = s.lower.rbegin(); it != s.lower.rend(); ++it) {
        if (detail::plottable(*it)) pts << detail::num(sx(it->x)) << ',' << detail::num(sy(it->y)) << ' ';
      }
      out << "<polygon points=\"" << pts.str() << "\" fill=\"" << color
          << "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
    }
    std::ostringstream pts;
    for (const auto& p : s.line) {
      if (detail::plottable(p)) pts << detail::num(sx(p.x)) << ',' << detail::num(sy(p.y)) << ' ';
    }
    out << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"2\"" << (s.dashed ? " stroke-dasharray=\"6 3\"" : "") << "/>\n";
    const double ly = top + 14 + 18.0 * static_cast<double>(k);
    out << "<line x1=\"" << detail::num(left + pw + 12) << "\" y1=\"" << detail::num(ly - 4) << "\" x2=\""
        << detail::num(left + pw + 34) << "\" y2=\"" << detail::num(ly - 4) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << detail::num(left + pw + 40) << "\" y=\"" << detail::num(ly) << "\">"
        << detail::escape(s.name) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

} // namespace prunelens::svg
