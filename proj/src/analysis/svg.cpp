#include "stconv/svg.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>

#include "stconv/errors.hpp"

namespace stconv::svg {
namespace {

std::string fixed(double v, int decimals = 2) {
  if (!std::isfinite(v)) v = 0.0;
  if (v == 0.0) v = 0.0;  // drop negative zero
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, decimals);
  return std::string(buf, ptr);
}

struct Rgb {
  double r, g, b;
};

// Piecewise-linear approximation of a perceptual blue-green-yellow ramp.
std::string ramp(double t) {
  static constexpr std::array<Rgb, 5> stops{{{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
  t = std::clamp(std::isfinite(t) ? t : 0.0, 0.0, 1.0) * (stops.size() - 1);
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(t), stops.size() - 2);
  const double f = t - static_cast<double>(i);
  auto mix = [&](double a, double b) { return static_cast<int>(std::lround(a + (b - a) * f)); };
  char buf[8];
  const int r = mix(stops[i].r, stops[i + 1].r), g = mix(stops[i].g, stops[i + 1].g),
            b = mix(stops[i].b, stops[i + 1].b);
  static constexpr char hex[] = "0123456789abcdef";
  buf[0] = '#';
  for (int k = 0; int c : {r, g, b}) {
    buf[1 + 2 * k] = hex[(c >> 4) & 15];
    buf[2 + 2 * k] = hex[c & 15];
    ++k;
  }
  return std::string(buf, 7);
}

const std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                          "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string header(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(w, 0) + "\" height=\"" + fixed(h, 0) +
         "\" viewBox=\"0 0 " + fixed(w, 0) + " " + fixed(h, 0) +
         "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string text(double x, double y, const std::string& s, const std::string& extra = {}) {
  return "<text x=\"" + fixed(x) + "\" y=\"" + fixed(y) + "\"" + (extra.empty() ? "" : " " + extra) + ">" +
         escape(s) + "</text>\n";
}

std::string line(double x1, double y1, double x2, double y2, const std::string& stroke = "black") {
  return "<line x1=\"" + fixed(x1) + "\" y1=\"" + fixed(y1) + "\" x2=\"" + fixed(x2) + "\" y2=\"" + fixed(y2) +
         "\" stroke=\"" + stroke + "\"/>\n";
}

std::string rect(double x, double y, double w, double h, const std::string& fill) {
  return "<rect x=\"" + fixed(x) + "\" y=\"" + fixed(y) + "\" width=\"" + fixed(w) + "\" height=\"" + fixed(h) +
         "\" fill=\"" + fill + "\"/>\n";
}

// Axis frame with tick labels at both ends and the middle.
std::string axes(double x0, double y0, double w, double h, double xlo, double xhi, double ylo, double yhi,
                 const std::string& x_label, const std::string& y_label) {
  std::string s = line(x0, y0 + h, x0 + w, y0 + h) + line(x0, y0, x0, y0 + h);
  for (int i = 0; i <= 2; ++i) {
    const double fx = x0 + w * i / 2.0, fy = y0 + h - h * i / 2.0;
    s += line(fx, y0 + h, fx, y0 + h + 4);
    s += text(fx, y0 + h + 16, fixed(xlo + (xhi - xlo) * i / 2.0, 3), "text-anchor=\"middle\"");
    s += line(x0 - 4, fy, x0, fy);
    s += text(x0 - 6, fy + 4, fixed(ylo + (yhi - ylo) * i / 2.0, 3), "text-anchor=\"end\"");
  }
  s += text(x0 + w / 2, y0 + h + 34, x_label, "text-anchor=\"middle\"");
  s += text(x0 - 50, y0 + h / 2, y_label,
            "text-anchor=\"middle\" transform=\"rotate(-90 " + fixed(x0 - 50) + " " + fixed(y0 + h / 2) + ")\"");
  return s;
}

}  // namespace

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string heatmap(std::span<const double> values, std::size_t rows, std::size_t cols,
                    std::span<const std::string> row_labels, std::span<const std::string> col_labels,
                    const std::string& title, double lo, double hi) {
  if (values.size() != rows * cols || row_labels.size() != rows || col_labels.size() != cols) {
    throw DimensionError("heatmap: values or labels do not match a " + std::to_string(rows) + "x" +
                         std::to_string(cols) + " grid");
  }
  const double cell = std::clamp(480.0 / static_cast<double>(std::max(rows, cols)), 8.0, 40.0);
  const double left = 110, top = 40 + 90;
  const double w = left + cell * cols + 90, h = top + cell * rows + 20;
  std::string s = header(w, h);
  s += text(w / 2, 20, title, "text-anchor=\"middle\" font-size=\"14\"");
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::size_t c = 0; c < cols; ++c) {
    const double x = left + cell * (c + 0.5), y = top - 6;
    s += text(x, y, col_labels[c], "transform=\"rotate(-60 " + fixed(x) + " " + fixed(y) + ")\"");
  }
  for (std::size_t r = 0; r < rows; ++r) {
    s += text(left - 6, top + cell * (r + 0.5) + 4, row_labels[r], "text-anchor=\"end\"");
    for (std::size_t c = 0; c < cols; ++c) {
      s += rect(left + cell * c, top + cell * r, cell, cell, ramp((values[r * cols + c] - lo) / span));
    }
  }
  // Colour bar.
  const double bx = left + cell * cols + 20, bh = cell * rows;
  for (int i = 0; i < 20; ++i) s += rect(bx, top + bh * (19 - i) / 20.0, 14, bh / 20.0 + 0.5, ramp((i + 0.5) / 20.0));
  s += text(bx + 18, top + 8, fixed(hi, 3));
  s += text(bx + 18, top + bh, fixed(lo, 3));
  return s + "</svg>\n";
}

std::string histogram(std::span<const double> values, std::size_t n_bins, double lo, double hi,
                      const std::string& title, const std::string& x_label) {
  if (n_bins == 0 || !(hi > lo)) throw ParameterError("histogram: need n_bins >= 1 and hi > lo");
  std::vector<std::size_t> counts(n_bins, 0);
  for (double v : values) {
    if (!std::isfinite(v) || v < lo || v > hi) continue;
    const auto b = std::min(n_bins - 1, static_cast<std::size_t>((v - lo) / (hi - lo) * n_bins));
    ++counts[b];
  }
  const double peak = static_cast<double>(std::max<std::size_t>(1, *std::max_element(counts.begin(), counts.end())));
  const double x0 = 70, y0 = 40, w = 480, h = 260;
  std::string s = header(x0 + w + 30, y0 + h + 50);
  s += text(x0 + w / 2, 20, title, "text-anchor=\"middle\" font-size=\"14\"");
  const double bw = w / static_cast<double>(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    const double bh = h * static_cast<double>(counts[b]) / peak;
    s += rect(x0 + bw * b, y0 + h - bh, bw, bh, "#4477aa");
  }
  s += axes(x0, y0, w, h, lo, hi, 0.0, peak, x_label, "count");
  return s + "</svg>\n";
}

std::string scatter(std::span<const ScatterSeries> series, const std::string& title, const std::string& x_label,
                    const std::string& y_label) {
  double xlo = 0, xhi = 1, ylo = 0, yhi = 1;
  bool first = true;
  for (const auto& sr : series) {
    if (sr.x.size() != sr.y.size()) throw DimensionError("scatter: series '" + sr.name + "' has unequal x and y");
    for (std::size_t i = 0; i < sr.x.size(); ++i) {
      if (first) {
        xlo = xhi = sr.x[i];
        ylo = yhi = sr.y[i];
        first = false;
      }
      xlo = std::min(xlo, sr.x[i]);
      xhi = std::max(xhi, sr.x[i]);
      ylo = std::min(ylo, sr.y[i]);
      yhi = std::max(yhi, sr.y[i]);
    }
  }
  const double xpad = xhi > xlo ? 0.05 * (xhi - xlo) : 0.5, ypad = yhi > ylo ? 0.05 * (yhi - ylo) : 0.5;
  xlo -= xpad, xhi += xpad, ylo -= ypad, yhi += ypad;
  const double x0 = 80, y0 = 40, w = 420, h = 280;
  std::string s = header(x0 + w + 130, y0 + h + 50);
  s += text(x0 + w / 2, 20, title, "text-anchor=\"middle\" font-size=\"14\"");
  s += axes(x0, y0, w, h, xlo, xhi, ylo, yhi, x_label, y_label);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* colour = kPalette[k % kPalette.size()];
    for (std::size_t i = 0; i < series[k].x.size(); ++i) {
      const double px = x0 + w * (series[k].x[i] - xlo) / (xhi - xlo);
      const double py = y0 + h - h * (series[k].y[i] - ylo) / (yhi - ylo);
      s += "<circle cx=\"" + fixed(px) + "\" cy=\"" + fixed(py) + "\" r=\"4\" fill=\"" + colour + "\"/>\n";
    }
    s += "<circle cx=\"" + fixed(x0 + w + 20) + "\" cy=\"" + fixed(y0 + 10 + 18.0 * k) + "\" r=\"4\" fill=\"" +
         colour + "\"/>\n";
    s += text(x0 + w + 30, y0 + 14 + 18.0 * k, series[k].name);
  }
  return s + "</svg>\n";
}

}  // namespace stconv::svg
