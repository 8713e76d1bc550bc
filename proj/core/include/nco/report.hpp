#pragma once

// Byte-stable text artifacts: SVG line/scatter plots and file emission.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "nco/analysis.hpp"
#include "nco/records.hpp"
#include "nco/scaling.hpp"

namespace nco::report {

enum class SeriesKind { kLine, kScatter };

struct Series {
  std::string name;
  SeriesKind kind = SeriesKind::kScatter;
  std::vector<scaling::XY> points;
};

struct Plot {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  int width = 640;
  int height = 480;
  std::vector<Series> series;
};

/// Pixel position of a data point in the rendered plot.
std::pair<double, double> to_pixel(const Plot& plot, double x, double y);

/// One <polyline class="fit"> per line series and one <circle class="point">
/// per scatter point. Throws ValidationError if a log axis sees x or y <= 0.
std::string render_svg(const Plot& plot);

/// Observed points and fitted curves of every curve in the report. Bivariate
/// forms are drawn as predicted against observed gap with the identity line.
Plot fit_plot(const records::FitReport& report);
Plot longsight_plot(const analysis::LongSightReport& report);
Plot pca_plot(const analysis::Pca& pca, const std::vector<bool>& is_next);

/// Writes `text` to `path`, replacing it. Throws ValidationError when the
/// path cannot be written.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace nco::report
