#pragma once

// Self-contained SVG charts for a run directory.

#include "robform/runlog.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace robform::svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline const char* palette(int k) {
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors[k % 10];
}

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
};

struct RefLine {
  double value = 0.0;
  std::string label;
};

struct Frame {
  double width = 640, height = 420;
  double left = 70, right = 20, top = 40, bottom = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;

  double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
  double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

inline std::string header(const Frame& f, const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(f.width) + "\" height=\"" + num(f.height) +
                  "\" viewBox=\"0 0 " + num(f.width) + " " + num(f.height) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(f.width / 2) + "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">" + title +
       "</text>\n";
  return s;
}

inline std::string axes(const Frame& f, const std::string& xlabel, const std::string& ylabel, bool log_y) {
  std::string s;
  const double xl = f.left, xr = f.width - f.right, yt = f.top, yb = f.height - f.bottom;
  s += "<g stroke=\"black\" stroke-width=\"1\" fill=\"none\"><rect x=\"" + num(xl) + "\" y=\"" + num(yt) + "\" width=\"" + num(xr - xl) +
       "\" height=\"" + num(yb - yt) + "\"/></g>\n";
  s += "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int k = 0; k <= 5; ++k) {
    const double xv = f.x0 + (f.x1 - f.x0) * k / 5.0;
    s += "<text x=\"" + num(f.px(xv)) + "\" y=\"" + num(yb + 16) + "\" text-anchor=\"middle\">" + tick(xv) + "</text>\n";
    const double yv = f.y0 + (f.y1 - f.y0) * k / 5.0;
    const std::string lab = log_y ? "1e" + tick(yv) : tick(yv);
    s += "<text x=\"" + num(xl - 6) + "\" y=\"" + num(f.py(yv) + 4) + "\" text-anchor=\"end\">" + lab + "</text>\n";
  }
  s += "<text x=\"" + num((xl + xr) / 2) + "\" y=\"" + num(f.height - 12) + "\" text-anchor=\"middle\">" + xlabel + "</text>\n";
  s += "<text x=\"16\" y=\"" + num((yt + yb) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " + num((yt + yb) / 2) + ")\">" +
       ylabel + "</text>\n";
  s += "</g>\n";
  return s;
}

inline std::string polyline(const Frame& f, const std::vector<double>& x, const std::vector<double>& y, const std::string& color,
                            const std::string& extra = "") {
  if (x.empty()) return {};
  std::string s = "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\"" + extra + " points=\"";
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (k) s += ' ';
    s += num(f.px(x[k])) + "," + num(f.py(y[k]));
  }
  return s + "\"/>\n";
}

inline void pad_range(double& lo, double& hi) {
  if (!(hi > lo)) {
    const double c = std::isfinite(lo) ? lo : 0.0;
    lo = c - 1.0;
    hi = c + 1.0;
    return;
  }
  const double m = 0.05 * (hi - lo);
  lo -= m;
  hi += m;
}

/// Time-series chart. With log_y the values are plotted as log10(max(y, 1e-16)).
inline std::string line_chart(const std::string& title, const std::string& xlabel, const std::string& ylabel, std::vector<Series> series,
                              const std::optional<RefLine>& ref = std::nullopt, bool log_y = false) {
  if (log_y) {
    for (auto& s : series) {
      for (double& v : s.y) v = std::log10(std::max(v, 1e-16));
    }
  }
  Frame f;
  double xlo = INFINITY, xhi = -INFINITY, ylo = INFINITY, yhi = -INFINITY;
  for (const auto& s : series) {
    for (double v : s.x) xlo = std::min(xlo, v), xhi = std::max(xhi, v);
    for (double v : s.y) {
      if (std::isfinite(v)) ylo = std::min(ylo, v), yhi = std::max(yhi, v);
    }
  }
  if (ref) {
    const double rv = log_y ? std::log10(std::max(ref->value, 1e-16)) : ref->value;
    ylo = std::min(ylo, rv);
    yhi = std::max(yhi, rv);
  }
  if (!(xhi > xlo)) {
    xlo = std::isfinite(xlo) ? xlo : 0.0;
    xhi = xlo + 1.0;
  }
  pad_range(ylo, yhi);
  f.x0 = xlo, f.x1 = xhi, f.y0 = ylo, f.y1 = yhi;
  std::string s = header(f, title) + axes(f, xlabel, ylabel, log_y);
  if (ref) {
    const double rv = log_y ? std::log10(std::max(ref->value, 1e-16)) : ref->value;
    s += "<line x1=\"" + num(f.px(f.x0)) + "\" y1=\"" + num(f.py(rv)) + "\" x2=\"" + num(f.px(f.x1)) + "\" y2=\"" + num(f.py(rv)) +
         "\" stroke=\"red\" stroke-dasharray=\"6 4\"/>\n";
    s += "<text x=\"" + num(f.px(f.x1) - 4) + "\" y=\"" + num(f.py(rv) - 5) +
         "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\"red\">" + ref->label + "</text>\n";
  }
  for (const auto& se : series) s += polyline(f, se.x, se.y, se.color);
  int k = 0;
  for (const auto& se : series) {
    const double y = f.top + 14 + 14 * k++;
    s += "<text x=\"" + num(f.left + 8) + "\" y=\"" + num(y) + "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" + se.color +
         "\">" + se.name + "</text>\n";
  }
  return s + "</svg>\n";
}

/// Agent paths in the plane with the graph drawn at the first and last logged time.
inline std::string trajectories(const LoadedRun& run) {
  Frame f;
  f.width = 640;
  f.height = 640;
  double xlo = INFINITY, xhi = -INFINITY, ylo = INFINITY, yhi = -INFINITY;
  for (const auto& x : run.x) {
    if (x.cols() < 2) continue;
    xlo = std::min(xlo, x.col(0).minCoeff()), xhi = std::max(xhi, x.col(0).maxCoeff());
    ylo = std::min(ylo, x.col(1).minCoeff()), yhi = std::max(yhi, x.col(1).maxCoeff());
  }
  pad_range(xlo, xhi);
  pad_range(ylo, yhi);
  // Equal aspect ratio.
  const double span = std::max(xhi - xlo, yhi - ylo);
  const double cx = 0.5 * (xlo + xhi), cy = 0.5 * (ylo + yhi);
  f.x0 = cx - span / 2, f.x1 = cx + span / 2, f.y0 = cy - span / 2, f.y1 = cy + span / 2;
  std::string s = header(f, "Agent trajectories") + axes(f, "x1 [m]", "x2 [m]", false);
  if (run.x.empty() || run.dim < 2) return s + "</svg>\n";

  auto draw_edges = [&](const Eigen::MatrixXd& x, const std::vector<AgentPair>& edges, const std::string& style) {
    std::string e;
    for (const auto& [i, j] : edges) {
      e += "<line x1=\"" + num(f.px(x(i, 0))) + "\" y1=\"" + num(f.py(x(i, 1))) + "\" x2=\"" + num(f.px(x(j, 0))) + "\" y2=\"" +
           num(f.py(x(j, 1))) + "\" " + style + "/>\n";
    }
    return e;
  };
  s += draw_edges(run.x.front(), run.edges.front(), "stroke=\"#bbbbbb\" stroke-dasharray=\"4 3\"");
  s += draw_edges(run.x.back(), run.edges.back(), "stroke=\"#888888\"");
  for (int i = 0; i < run.agents; ++i) {
    std::vector<double> px, py;
    for (const auto& x : run.x) {
      px.push_back(x(i, 0));
      py.push_back(x(i, 1));
    }
    s += polyline(f, px, py, palette(i), " stroke-opacity=\"0.8\"");
    s += "<circle cx=\"" + num(f.px(px.front())) + "\" cy=\"" + num(f.py(py.front())) + "\" r=\"3\" fill=\"none\" stroke=\"" +
         palette(i) + "\"/>\n";
    s += "<circle cx=\"" + num(f.px(px.back())) + "\" cy=\"" + num(f.py(py.back())) + "\" r=\"4\" fill=\"" + palette(i) + "\"/>\n";
  }
  return s + "</svg>\n";
}

/// Writes trajectories.svg, min_distance.svg, velocity_diff.svg and energy.svg.
inline std::vector<std::string> plot_run(const std::filesystem::path& dir) {
  const LoadedRun run = load_run(dir);
  const std::vector<std::pair<std::string, std::string>> out = {
      {"trajectories.svg", trajectories(run)},
      {"min_distance.svg", line_chart("Minimal distance between agents", "t [s]", "min |x_ij| [m]",
                                      {{"min distance", run.t, run.min_distance, palette(0)}}, RefLine{run.d_s, "d_s"})},
      {"velocity_diff.svg", line_chart("Velocity disagreement and formation error", "t [s]", "log10 value",
                                       {{"max |rho_i - rho_j|", run.t, run.velocity_disagreement, palette(0)},
                                        {"max formation error", run.t, run.formation_error, palette(1)}},
                                       std::nullopt, true)},
      {"energy.svg", line_chart("Energy W", "t [s]", "W", {{"W", run.t, run.W, palette(2)}})},
  };
  std::vector<std::string> names;
  for (const auto& [name, text] : out) {
    write_text(dir / name, text);
    names.push_back(name);
  }
  return names;
}

}  // namespace robform::svg
