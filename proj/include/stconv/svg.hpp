#pragma once

#include <span>
#include <string>
#include <vector>

namespace stconv::svg {

// Minimal deterministic SVG figures. Coordinates are printed with a fixed
// number of decimals and no locale, so identical inputs produce identical
// bytes.

// Row-major values [rows, cols]; colour scale spans [lo, hi].
std::string heatmap(std::span<const double> values, std::size_t rows, std::size_t cols,
                    std::span<const std::string> row_labels, std::span<const std::string> col_labels,
                    const std::string& title, double lo, double hi);

std::string histogram(std::span<const double> values, std::size_t n_bins, double lo, double hi,
                      const std::string& title, const std::string& x_label);

struct ScatterSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

std::string scatter(std::span<const ScatterSeries> series, const std::string& title, const std::string& x_label,
                    const std::string& y_label);

// Escapes &, <, >, and quotes.
std::string escape(const std::string& text);

}  // namespace stconv::svg
