#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "playerval/error.hpp"

// Static SVG charts. Every chart is also fully described by the CSV written
// next to it; these are convenience renderings only.
namespace playerval::svg {

inline std::string num(double v, int precision = 2) {
  if (!std::isfinite(v)) return "0";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, precision);
  return std::string(buf, res.ptr);
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

// Blue (0) to red (1), the usual low/high feature-value palette.
inline std::string heat_colour(double t) {
  t = std::clamp(std::isfinite(t) ? t : 0.5, 0.0, 1.0);
  const int r = static_cast<int>(std::lround(30 + t * (220 - 30)));
  const int g = static_cast<int>(std::lround(40 + 80 * (1.0 - std::fabs(2.0 * t - 1.0))));
  const int b = static_cast<int>(std::lround(229 - t * (229 - 60)));
  char buf[16];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

class Document {
 public:
  Document(double width, double height) : width_(width), height_(height) {}

  void rect(double x, double y, double w, double h, const std::string& fill) {
    body_ << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(std::max(w, 0.0))
          << "\" height=\"" << num(std::max(h, 0.0)) << "\" fill=\"" << fill << "\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0) {
    body_ << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\"" << num(y2)
          << "\" stroke=\"" << stroke << "\" stroke-width=\"" << num(width) << "\"/>\n";
  }
  void circle(double cx, double cy, double r, const std::string& fill) {
    body_ << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(cy) << "\" r=\"" << num(r) << "\" fill=\"" << fill
          << "\" fill-opacity=\"0.7\"/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
    body_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) body_ << (i ? " " : "") << num(pts[i].first) << ',' << num(pts[i].second);
    body_ << "\"/>\n";
  }
  void text(double x, double y, const std::string& s, const std::string& anchor = "start", int size = 11) {
    body_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-family=\"sans-serif\" font-size=\"" << size
          << "\" text-anchor=\"" << anchor << "\">" << escape(s) << "</text>\n";
  }

  std::string str() const {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width_, 0) << "\" height=\"" << num(height_, 0)
        << "\" viewBox=\"0 0 " << num(width_, 0) << ' ' << num(height_, 0) << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body_.str() << "</svg>\n";
    return out.str();
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::Io, "cannot write '" + path + "'");
    out << str();
  }

 private:
  double width_;
  double height_;
  std::ostringstream body_;
};

struct Range {
  double lo = 0.0;
  double hi = 1.0;

  static Range of(const std::vector<double>& v, bool include_zero = false) {
    Range r{include_zero ? 0.0 : INFINITY, include_zero ? 0.0 : -INFINITY};
    for (double x : v) {
      if (!std::isfinite(x)) continue;
      r.lo = std::min(r.lo, x);
      r.hi = std::max(r.hi, x);
    }
    if (!std::isfinite(r.lo)) r = {0.0, 1.0};
    if (r.hi - r.lo < 1e-12) {
      r.lo -= 0.5;
      r.hi += 0.5;
    }
    return r;
  }
  double map(double v, double a, double b) const { return a + (v - lo) / (hi - lo) * (b - a); }
};

/// Horizontal bars, largest first as given.
inline Document bar_chart(const std::string& title, const std::vector<std::string>& labels,
                          const std::vector<double>& values) {
  const double row_h = 22, left = 170, right = 40, top = 40, plot_w = 420;
  Document doc(left + plot_w + right, top + row_h * static_cast<double>(labels.size()) + 30);
  doc.text(left + plot_w / 2, 22, title, "middle", 13);
  const Range r = Range::of(values, true);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double y = top + row_h * static_cast<double>(i);
    doc.text(left - 6, y + 15, labels[i], "end");
    const double x0 = r.map(0.0, left, left + plot_w);
    const double x1 = r.map(values[i], left, left + plot_w);
    doc.rect(std::min(x0, x1), y + 4, std::fabs(x1 - x0), row_h - 8, "#1e88e5");
    doc.text(std::max(x0, x1) + 4, y + 15, num(values[i], 4));
  }
  return doc;
}

struct SwarmDot {
  std::size_t lane = 0;  // feature rank
  double x = 0.0;        // SHAP value
  double colour = 0.5;   // feature-value percentile
};

inline Document beeswarm_chart(const std::string& title, const std::vector<std::string>& lanes,
                               const std::vector<SwarmDot>& dots) {
  const double lane_h = 34, left = 170, right = 30, top = 40, plot_w = 460;
  Document doc(left + plot_w + right, top + lane_h * static_cast<double>(lanes.size()) + 40);
  doc.text(left + plot_w / 2, 22, title, "middle", 13);
  std::vector<double> xs;
  for (const auto& d : dots) xs.push_back(d.x);
  const Range r = Range::of(xs, true);
  const double x_zero = r.map(0.0, left, left + plot_w);
  doc.line(x_zero, top, x_zero, top + lane_h * static_cast<double>(lanes.size()), "#999999");
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    doc.text(left - 6, top + lane_h * static_cast<double>(i) + lane_h / 2 + 4, lanes[i], "end");
  }
  std::uint64_t jitter = 0x9e3779b97f4a7c15ULL;
  for (const auto& d : dots) {
    jitter ^= jitter << 13;
    jitter ^= jitter >> 7;
    jitter ^= jitter << 17;
    const double offset = (static_cast<double>(jitter % 1000) / 1000.0 - 0.5) * (lane_h * 0.6);
    doc.circle(r.map(d.x, left, left + plot_w), top + lane_h * static_cast<double>(d.lane) + lane_h / 2 + offset, 2.2,
               heat_colour(d.colour));
  }
  const double axis_y = top + lane_h * static_cast<double>(lanes.size()) + 16;
  doc.text(left, axis_y, num(r.lo, 3), "start");
  doc.text(left + plot_w, axis_y, num(r.hi, 3), "end");
  doc.text(left + plot_w / 2, axis_y + 14, "SHAP value (transformed scale)", "middle");
  return doc;
}

struct ForceBar {
  std::string label;
  double value = 0.0;  // signed contribution
};

/// Waterfall from the base value to the prediction.
inline Document force_chart(const std::string& title, double base, double prediction,
                            const std::vector<ForceBar>& bars) {
  const double row_h = 20, left = 230, right = 40, top = 50, plot_w = 420;
  Document doc(left + plot_w + right, top + row_h * static_cast<double>(bars.size() + 1) + 30);
  doc.text(left + plot_w / 2, 22, title, "middle", 13);
  std::vector<double> marks{base, prediction};
  double running = base;
  for (const auto& b : bars) {
    running += b.value;
    marks.push_back(running);
  }
  const Range r = Range::of(marks);
  doc.text(left - 6, top - 8, "base " + num(base, 4), "end");
  running = base;
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double y = top + row_h * static_cast<double>(i);
    const double x0 = r.map(running, left, left + plot_w);
    running += bars[i].value;
    const double x1 = r.map(running, left, left + plot_w);
    doc.rect(std::min(x0, x1), y + 3, std::max(std::fabs(x1 - x0), 1.0), row_h - 6,
             bars[i].value >= 0 ? "#d81b60" : "#1e88e5");
    doc.text(left - 6, y + 14, bars[i].label, "end");
  }
  const double y = top + row_h * static_cast<double>(bars.size());
  const double xp = r.map(prediction, left, left + plot_w);
  doc.line(xp, top - 4, xp, y + 4, "#000000", 1.5);
  doc.text(xp, y + 18, "prediction " + num(prediction, 4), "middle");
  return doc;
}

inline double doc_width(std::size_t columns, double pw, double pad) {
  return pad + static_cast<double>(columns) * (pw + pad);
}

struct Panel {
  std::string title;
  std::vector<double> x;
  std::vector<double> y;
};

/// Small multiples, `columns` panels per row; lines or dots.
inline Document panel_chart(const std::string& title, const std::vector<Panel>& panels, bool as_line,
                            std::size_t columns = 3) {
  const double pw = 240, ph = 170, pad = 36, top = 40;
  const std::size_t rows = (panels.size() + columns - 1) / std::max<std::size_t>(columns, 1);
  Document doc(doc_width(columns, pw, pad), top + static_cast<double>(rows) * (ph + pad + 10));
  doc.text(doc_width(columns, pw, pad) / 2, 22, title, "middle", 13);
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const double ox = pad + static_cast<double>(p % columns) * (pw + pad);
    const double oy = top + static_cast<double>(p / columns) * (ph + pad + 10);
    const auto& panel = panels[p];
    doc.text(ox + pw / 2, oy + 10, panel.title, "middle");
    doc.line(ox, oy + ph, ox + pw, oy + ph, "#999999");
    doc.line(ox, oy + 16, ox, oy + ph, "#999999");
    const Range rx = Range::of(panel.x);
    const Range ry = Range::of(panel.y);
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < panel.x.size() && i < panel.y.size(); ++i) {
      pts.emplace_back(rx.map(panel.x[i], ox, ox + pw), ry.map(panel.y[i], oy + ph, oy + 20));
    }
    if (as_line) {
      doc.polyline(pts, "#1e88e5");
    } else {
      for (const auto& [x, y] : pts) doc.circle(x, y, 1.8, "#1e88e5");
    }
    doc.text(ox, oy + ph + 12, num(rx.lo, 1), "start", 9);
    doc.text(ox + pw, oy + ph + 12, num(rx.hi, 1), "end", 9);
    doc.text(ox + 2, oy + 26, num(ry.hi, 3), "start", 9);
    doc.text(ox + 2, oy + ph - 4, num(ry.lo, 3), "start", 9);
  }
  return doc;
}

}  // namespace playerval::svg
