#include "nco/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "nco/error.hpp"

namespace nco::report {

namespace {

constexpr double kMarginLeft = 70.0;
constexpr double kMarginRight = 20.0;
constexpr double kMarginTop = 40.0;
constexpr double kMarginBottom = 50.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

double axis_value(double v, bool log_axis) {
  if (log_axis) {
    if (!(v > 0.0)) throw ValidationError(fmt::format("log axis cannot show {}", v));
    return std::log10(v);
  }
  return v;
}

struct Bounds {
  double x0, x1, y0, y1;
};

Bounds bounds_of(const Plot& plot) {
  Bounds b{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
           std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& s : plot.series) {
    for (const auto& p : s.points) {
      const double x = axis_value(p.x, plot.log_x), y = axis_value(p.y, plot.log_y);
      b.x0 = std::min(b.x0, x);
      b.x1 = std::max(b.x1, x);
      b.y0 = std::min(b.y0, y);
      b.y1 = std::max(b.y1, y);
    }
  }
  if (!std::isfinite(b.x0)) b = {0.0, 1.0, 0.0, 1.0};
  if (b.x1 == b.x0) {
    b.x0 -= 0.5;
    b.x1 += 0.5;
  }
  if (b.y1 == b.y0) {
    b.y0 -= 0.5;
    b.y1 += 0.5;
  }
  return b;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::pair<double, double> map_point(const Plot& plot, const Bounds& b, double x, double y) {
  const double ax = axis_value(x, plot.log_x), ay = axis_value(y, plot.log_y);
  const double w = plot.width - kMarginLeft - kMarginRight;
  const double h = plot.height - kMarginTop - kMarginBottom;
  return {kMarginLeft + (ax - b.x0) / (b.x1 - b.x0) * w, kMarginTop + (b.y1 - ay) / (b.y1 - b.y0) * h};
}

std::string tick_label(double v, bool log_axis) {
  return log_axis ? fmt::format("{:.3g}", std::pow(10.0, v)) : fmt::format("{:.3g}", v);
}

std::vector<double> geometric_range(double lo, double hi, int count) {
  std::vector<double> xs;
  for (int i = 0; i < count; ++i) xs.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (count - 1)));
  return xs;
}

}  // namespace

std::pair<double, double> to_pixel(const Plot& plot, double x, double y) {
  return map_point(plot, bounds_of(plot), x, y);
}

std::string render_svg(const Plot& plot) {
  const Bounds b = bounds_of(plot);
  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
      plot.width, plot.height, plot.width, plot.height);
  svg += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", plot.width, plot.height);
  svg += fmt::format("<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                     plot.width / 2, escape(plot.title));

  const double left = kMarginLeft, right = plot.width - kMarginRight;
  const double top = kMarginTop, bottom = plot.height - kMarginBottom;
  svg += fmt::format("<g class=\"axes\" stroke=\"black\" fill=\"none\">\n"
                     "<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\"/>\n"
                     "<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\"/>\n</g>\n",
                     left, bottom, right, bottom, left, top, left, bottom);
  for (int i = 0; i <= 4; ++i) {
    const double fx = b.x0 + (b.x1 - b.x0) * i / 4.0;
    const double fy = b.y0 + (b.y1 - b.y0) * i / 4.0;
    const double px = left + (right - left) * i / 4.0;
    const double py = bottom - (bottom - top) * i / 4.0;
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\" font-size=\"10\">{}</text>\n", px,
                       bottom + 15, tick_label(fx, plot.log_x));
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\" font-size=\"10\">{}</text>\n",
                       left - 5, py + 3, tick_label(fy, plot.log_y));
  }
  svg += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{}{}</text>\n",
                     (left + right) / 2, plot.height - 12, escape(plot.x_label), plot.log_x ? " (log)" : "");
  svg += fmt::format(
      "<text x=\"16\" y=\"{:.2f}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 {:.2f})\">"
      "{}{}</text>\n",
      (top + bottom) / 2, (top + bottom) / 2, escape(plot.y_label), plot.log_y ? " (log)" : "");

  for (std::size_t s = 0; s < plot.series.size(); ++s) {
    const Series& series = plot.series[s];
    const char* color = kPalette[s % std::size(kPalette)];
    if (series.kind == SeriesKind::kLine) {
      std::string pts;
      for (const auto& p : series.points) {
        const auto [px, py] = map_point(plot, b, p.x, p.y);
        if (!pts.empty()) pts += ' ';
        pts += fmt::format("{:.2f},{:.2f}", px, py);
      }
      svg += fmt::format(
          "<polyline class=\"fit\" data-name=\"{}\" fill=\"none\" stroke=\"{}\" stroke-dasharray=\"6 3\" "
          "points=\"{}\"/>\n",
          escape(series.name), color, pts);
    } else {
      for (const auto& p : series.points) {
        const auto [px, py] = map_point(plot, b, p.x, p.y);
        svg += fmt::format("<circle class=\"point\" data-name=\"{}\" cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3\" fill=\"{}\"/>\n",
                           escape(series.name), px, py, color);
      }
    }
  }
  svg += "</svg>\n";
  return svg;
}

Plot fit_plot(const records::FitReport& report) {
  Plot plot;
  plot.log_x = true;
  plot.log_y = true;
  plot.y_label = "gap (%)";
  const bool bivariate = report.form == records::FitForm::kDepthWidth ||
                         report.form == records::FitForm::kParamsRatio;
  switch (report.form) {
    case records::FitForm::kParams: plot.x_label = "parameters"; break;
    case records::FitForm::kSamples: plot.x_label = "training samples"; break;
    case records::FitForm::kCompute: plot.x_label = "GFLOPs per solution"; break;
    case records::FitForm::kTime: plot.x_label = "time (minutes)"; break;
    default: plot.x_label = "predicted gap (%)"; break;
  }
  plot.title = fmt::format("{} fit", records::to_string(report.form));

  if (bivariate) {
    plot.y_label = "observed gap (%)";
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& c : report.curves) {
      Series s{c.label, SeriesKind::kScatter, {}};
      for (const auto& p : c.points2) {
        const double pred = c.bivariate->predict(p.x1, p.x2);
        s.points.push_back({pred, p.y});
        lo = std::min({lo, pred, p.y});
        hi = std::max({hi, pred, p.y});
      }
      plot.series.push_back(std::move(s));
    }
    plot.series.push_back({"identity", SeriesKind::kLine, {{lo, lo}, {hi, hi}}});
    return plot;
  }

  for (const auto& c : report.curves) {
    plot.series.push_back({c.label, SeriesKind::kScatter, c.points});
    double lo = c.points.front().x, hi = c.points.back().x;
    for (const auto& p : c.points) {
      lo = std::min(lo, p.x);
      hi = std::max(hi, p.x);
    }
    Series line{c.label + " fit", SeriesKind::kLine, {}};
    for (double x : geometric_range(lo, hi, 32)) {
      const double y = c.power ? c.power->predict(x) : c.shifted->predict(x);
      line.points.push_back({x, y});
    }
    plot.series.push_back(std::move(line));
  }
  return plot;
}

Plot longsight_plot(const analysis::LongSightReport& report) {
  Plot plot;
  plot.title = "success rate by neighbor rank";
  plot.x_label = fmt::format("rank of optimal next node ({} = pooled tail)", report.k + 1);
  plot.y_label = "success rate";
  Series pts{"rate", SeriesKind::kScatter, {}};
  Series line{"rate", SeriesKind::kLine, {}};
  for (std::size_t b = 0; b < report.buckets.size(); ++b) {
    if (report.buckets[b].attempts == 0) continue;
    pts.points.push_back({static_cast<double>(b + 1), report.buckets[b].rate()});
  }
  line.points = pts.points;
  plot.series.push_back(std::move(line));
  plot.series.push_back(std::move(pts));
  return plot;
}

Plot pca_plot(const analysis::Pca& pca, const std::vector<bool>& is_next) {
  Plot plot;
  plot.title = "PCA of available-node embeddings";
  plot.x_label = "PC1";
  plot.y_label = "PC2";
  Series other{"other", SeriesKind::kScatter, {}};
  Series next{"optimal next", SeriesKind::kScatter, {}};
  for (std::size_t r = 0; r < pca.projection.rows; ++r) {
    const scaling::XY p{pca.projection.at(r, 0), pca.projection.at(r, 1)};
    (r < is_next.size() && is_next[r] ? next : other).points.push_back(p);
  }
  plot.series.push_back(std::move(other));
  plot.series.push_back(std::move(next));
  return plot;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
}

}  // namespace nco::report
