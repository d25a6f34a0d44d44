#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "gmc/calibration.hpp"
#include "gmc/diagnostics.hpp"

namespace gmc::svg {

inline const std::vector<std::string>& palette() {
  static const std::vector<std::string> colors = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2",
                                                  "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};
  return colors;
}

inline std::string color_for(std::size_t index) { return palette()[index % palette().size()]; }

/// Colour blend toward white; `strength` in [0, 1].
inline std::string tint(const std::string& hex, double strength) {
  unsigned r = 0, g = 0, b = 0;
  std::sscanf(hex.c_str(), "#%02x%02x%02x", &r, &g, &b);
  auto mix = [&](unsigned c) { return static_cast<unsigned>(std::lround(255.0 - (255.0 - c) * strength)); };
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", mix(r), mix(g), mix(b));
  return buf;
}

struct Point2 {
  double x, y;
  std::size_t label;
};

namespace detail {

inline void header(std::ostream& out, int width, int height) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\" shape-rendering=\"crispEdges\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

/// Emits one rect per horizontal run of equal colour.
template <typename ColorOf>
void grid_cells(std::ostream& out, const GridMap& g, double size, ColorOf color_of) {
  const double cell = size / static_cast<double>(g.resolution);
  for (std::size_t j = 0; j < g.resolution; ++j) {
    std::size_t i = 0;
    while (i < g.resolution) {
      const std::string color = color_of(j * g.resolution + i);
      std::size_t run = i + 1;
      while (run < g.resolution && color_of(j * g.resolution + run) == color) ++run;
      // Row j = 0 is the lowest y; SVG y grows downward.
      const double y = size - static_cast<double>(j + 1) * cell;
      out << "<rect x=\"" << static_cast<double>(i) * cell << "\" y=\"" << y << "\" width=\""
          << static_cast<double>(run - i) * cell << "\" height=\"" << cell << "\" fill=\"" << color << "\"/>\n";
      i = run;
    }
  }
}

inline void scatter(std::ostream& out, const GridMap& g, double size, const std::vector<Point2>& points) {
  const auto& b = g.bounds;
  for (const auto& p : points) {
    const double sx = (p.x - b.x_min) / (b.x_max - b.x_min) * size;
    const double sy = size - (p.y - b.y_min) / (b.y_max - b.y_min) * size;
    if (sx < 0 || sx > size || sy < 0 || sy > size) continue;
    out << "<circle cx=\"" << sx << "\" cy=\"" << sy << "\" r=\"1.6\" fill=\"" << color_for(p.label)
        << "\" stroke=\"black\" stroke-width=\"0.3\"/>\n";
  }
}

inline std::string escape(const std::string& text) {
  std::string out;
  for (char ch : text) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

inline void title(std::ostream& out, double x, double y, const std::string& text) {
  out << "<text x=\"" << x << "\" y=\"" << y << "\" font-family=\"sans-serif\" font-size=\"13\">" << escape(text)
      << "</text>\n";
}

}  // namespace detail

/// Decision regions (light class colours) with optional overlaid samples.
inline void decision_regions(std::ostream& out, const GridMap& g, const std::vector<Point2>& points = {},
                             const std::string& caption = "decision regions") {
  constexpr double size = 480.0;
  detail::header(out, static_cast<int>(size), static_cast<int>(size) + 24);
  out << "<g transform=\"translate(0,24)\">\n";
  detail::grid_cells(out, g, size, [&](std::size_t cell) { return tint(color_for(g.predicted[cell]), 0.35); });
  detail::scatter(out, g, size, points);
  out << "</g>\n";
  detail::title(out, 6, 16, caption);
  out << "</svg>\n";
}

/// Locally responsible plane of one class; shade encodes max responsibility.
inline void responsibility_map(std::ostream& out, const GridMap& g, const std::vector<Point2>& points = {}) {
  constexpr double size = 480.0;
  detail::header(out, static_cast<int>(size), static_cast<int>(size) + 24);
  out << "<g transform=\"translate(0,24)\">\n";
  detail::grid_cells(out, g, size, [&](std::size_t cell) {
    const std::size_t m = g.winning_plane(cell);
    const double a = g.responsibilities[cell * g.planes + m];
    // Quantize shading so run-length merging stays effective.
    const double level = std::round(a * 10.0) / 10.0;
    return tint(color_for(m + 3), 0.15 + 0.6 * level);
  });
  detail::scatter(out, g, size, points);
  out << "</g>\n";
  detail::title(out, 6, 16, "plane responsibility map, class " + std::to_string(g.responsibility_class));
  out << "</svg>\n";
}

/// Reliability diagram: per-bin accuracy bars against the diagonal.
inline void reliability_diagram(std::ostream& out, std::span<const ReliabilityBin> bins, const std::string& caption) {
  constexpr double size = 400.0;
  constexpr double pad = 40.0;
  const int total = static_cast<int>(size + 2 * pad);
  detail::header(out, total, total);
  auto px = [&](double v) { return pad + v * size; };
  auto py = [&](double v) { return pad + (1.0 - v) * size; };
  out << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << size << "\" height=\"" << size
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (const auto& b : bins) {
    if (b.count == 0) continue;
    out << "<rect x=\"" << px(b.low) << "\" y=\"" << py(b.accuracy) << "\" width=\"" << (b.high - b.low) * size
        << "\" height=\"" << b.accuracy * size << "\" fill=\"#4e79a7\" stroke=\"white\"/>\n";
    out << "<circle cx=\"" << px(b.mean_confidence) << "\" cy=\"" << py(b.mean_confidence)
        << "\" r=\"2.5\" fill=\"#e15759\"/>\n";
  }
  out << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
      << "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  char buf[128];
  std::snprintf(buf, sizeof buf, "%s (ECE %.4f)", caption.c_str(), ece_from_bins(bins));
  detail::title(out, pad, pad - 12, buf);
  detail::title(out, pad + size / 2 - 30, pad + size + 28, "confidence");
  out << "</svg>\n";
}

}  // namespace gmc::svg
