#pragma once

// Model grid, FLOPs accounting, and the power-law fits used for scaling
// analysis:
//   power      gap = (X_c / x)^alpha
//   bivariate  gap = (c1 / x1)^beta1 * (c2 / x2)^beta2   (D,W) or (N, A = D/W)
//   shifted    gap = alpha_t * t^(-beta_t) + gamma

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nco/model.hpp"

namespace nco::scaling {

/// The twelve grid configurations.
std::vector<model::ModelConfig> grid();

/// 2 * params * n * (n + 2) * beam_factor, in GFLOPs. Every decoding step
/// runs the full (n + 2)-row sequence with visited rows masked.
double flops_per_solution(std::int64_t params, int n, int beam_factor = 1);
double flops_per_solution(const model::ModelConfig& config, int n, int beam_factor = 1);

struct XY {
  double x = 0.0;
  double y = 0.0;
};

enum class FitMethod {
  kGapSpace,   // nonlinear least squares on the gaps, seeded by the log fit
  kLogLinear,  // ordinary least squares on log gap
};
std::string_view to_string(FitMethod method);
FitMethod parse_fit_method(std::string_view text);

struct Accuracy {
  double r2 = 0.0;
  double mape = 0.0;  // percent
};

/// R^2 and MAPE in gap space. Throws on fewer than 2 points, on
/// zero-variance targets, or on a zero target.
Accuracy r2_mape(std::span<const double> truth, std::span<const double> predicted);
Accuracy r2_mape(std::span<const XY> points, const std::function<double(double)>& predictor);

struct PowerLawFit {
  double alpha = 0.0;
  double x_c = 0.0;
  double r2 = 0.0;
  double mape = 0.0;
  int n_points = 0;
  FitMethod method = FitMethod::kGapSpace;

  double predict(double x) const;
};

/// Needs >= 2 points with x > 0 and y > 0 and at least two distinct x.
PowerLawFit fit_power(std::span<const XY> points, FitMethod method = FitMethod::kGapSpace);

struct XYZ {
  double x1 = 0.0;
  double x2 = 0.0;
  double y = 0.0;
};

struct BivariateFit {
  double beta1 = 0.0;
  double beta2 = 0.0;
  /// Only the product (c1/x1)^beta1 (c2/x2)^beta2 is identifiable; the
  /// intercept is split evenly, beta1 ln c1 == beta2 ln c2.
  double c1 = 0.0;
  double c2 = 0.0;
  double r2 = 0.0;
  double mape = 0.0;
  int n_points = 0;
  FitMethod method = FitMethod::kLogLinear;

  double predict(double x1, double x2) const;
};

/// Needs >= 3 positive points; throws ValidationError("rank-deficient ...")
/// when log x1 and log x2 do not span two independent directions.
BivariateFit fit_bivariate(std::span<const XYZ> points, FitMethod method = FitMethod::kLogLinear);

/// (D, W) and (N, A) point builders from (depth, width, gap) rows.
/// N comes from param_count of the matching grid configuration.
struct DepthWidthGap {
  int depth = 0;
  int width = 0;
  double gap = 0.0;
};
std::vector<XYZ> depth_width_points(std::span<const DepthWidthGap> rows);
std::vector<XYZ> params_ratio_points(std::span<const DepthWidthGap> rows);

struct ShiftedFit {
  double alpha_t = 0.0;
  double beta_t = 0.0;
  double gamma = 0.0;
  double r2 = 0.0;
  double mape = 0.0;
  double sse = 0.0;
  int n_points = 0;
  bool converged = true;

  double predict(double t) const;
};

/// Needs >= 4 points with t > 0 and y > 0. gamma is constrained to
/// [0, min y); the pure power law (gamma = 0) is always a candidate, so the
/// residual never exceeds the best pure power-law fit.
ShiftedFit fit_shifted(std::span<const XY> points);

/// Sum of squared gap-space residuals.
double sse(std::span<const XY> points, const std::function<double(double)>& predictor);

}  // namespace nco::scaling
