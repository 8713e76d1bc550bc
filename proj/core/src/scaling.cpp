#include "nco/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "nco/error.hpp"

namespace nco::scaling {

std::vector<model::ModelConfig> grid() { return model::table_grid(); }

double flops_per_solution(std::int64_t params, int n, int beam_factor) {
  if (params < 0 || n < 1 || beam_factor < 1) throw ValidationError("invalid FLOPs arguments");
  const double tokens = static_cast<double>(n) * static_cast<double>(n + 2);
  return 2.0 * static_cast<double>(params) * tokens * beam_factor / 1e9;
}

double flops_per_solution(const model::ModelConfig& config, int n, int beam_factor) {
  return flops_per_solution(model::param_count(config), n, beam_factor);
}

std::string_view to_string(FitMethod method) {
  return method == FitMethod::kGapSpace ? "gap" : "log";
}

FitMethod parse_fit_method(std::string_view text) {
  if (text == "gap" || text == "nls") return FitMethod::kGapSpace;
  if (text == "log" || text == "ols") return FitMethod::kLogLinear;
  throw ValidationError(fmt::format("unknown fit method '{}' (expected gap or log)", text));
}

Accuracy r2_mape(std::span<const double> truth, std::span<const double> predicted) {
  if (truth.size() != predicted.size()) throw ValidationError("r2_mape: size mismatch");
  if (truth.size() < 2) throw ValidationError("r2_mape needs at least 2 points");
  double mean = 0.0;
  for (double y : truth) mean += y;
  mean /= static_cast<double>(truth.size());
  double ss_tot = 0.0, ss_res = 0.0, ape = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == 0.0) throw ValidationError("r2_mape: MAPE is undefined for a zero target");
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
    ss_res += (truth[i] - predicted[i]) * (truth[i] - predicted[i]);
    ape += std::abs(predicted[i] - truth[i]) / std::abs(truth[i]);
  }
  if (ss_tot == 0.0) throw ValidationError("r2_mape: R^2 is undefined for zero-variance targets");
  return {1.0 - ss_res / ss_tot, 100.0 * ape / static_cast<double>(truth.size())};
}

Accuracy r2_mape(std::span<const XY> points, const std::function<double(double)>& predictor) {
  std::vector<double> t, p;
  for (const auto& pt : points) {
    t.push_back(pt.y);
    p.push_back(predictor(pt.x));
  }
  return r2_mape(t, p);
}

double sse(std::span<const XY> points, const std::function<double(double)>& predictor) {
  double s = 0.0;
  for (const auto& pt : points) {
    const double r = predictor(pt.x) - pt.y;
    s += r * r;
  }
  return s;
}

namespace {

// Solves A x = b in place for a small dense system (Gaussian elimination
// with partial pivoting). Returns false when A is singular.
bool solve_small(std::vector<double> a, std::vector<double> b, std::size_t k, std::vector<double>& x) {
  for (std::size_t col = 0; col < k; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < k; ++r)
      if (std::abs(a[r * k + col]) > std::abs(a[piv * k + col])) piv = r;
    if (a[piv * k + col] == 0.0 || !std::isfinite(a[piv * k + col])) return false;
    if (piv != col) {
      for (std::size_t c = 0; c < k; ++c) std::swap(a[col * k + c], a[piv * k + c]);
      std::swap(b[col], b[piv]);
    }
    for (std::size_t r = col + 1; r < k; ++r) {
      const double f = a[r * k + col] / a[col * k + col];
      for (std::size_t c = col; c < k; ++c) a[r * k + c] -= f * a[col * k + c];
      b[r] -= f * b[col];
    }
  }
  x.assign(k, 0.0);
  for (std::size_t i = k; i-- > 0;) {
    double s = b[i];
    for (std::size_t c = i + 1; c < k; ++c) s -= a[i * k + c] * x[c];
    x[i] = s / a[i * k + i];
  }
  return true;
}

// residuals(p, r, J): fills r (m) and J (m x k, row-major).
using ResidualFn = std::function<void(const std::vector<double>&, std::vector<double>&, std::vector<double>&)>;
using ProjectFn = std::function<void(std::vector<double>&)>;

struct LmResult {
  std::vector<double> p;
  double sse = 0.0;
  bool converged = false;
};

double sum_sq(const std::vector<double>& r) {
  double s = 0.0;
  for (double v : r) s += v * v;
  return s;
}

LmResult levenberg_marquardt(std::vector<double> p, const ResidualFn& fn, const ProjectFn& project,
                             int max_iter = 1000) {
  const std::size_t k = p.size();
  if (project) project(p);
  std::vector<double> r, jac;
  fn(p, r, jac);
  const std::size_t m = r.size();
  double cost = sum_sq(r);
  double lambda = 1e-3;
  LmResult out{p, cost, false};
  if (!std::isfinite(cost)) return out;
  for (int iter = 0; iter < max_iter; ++iter) {
    if (cost == 0.0) {
      out.converged = true;
      break;
    }
    std::vector<double> jtj(k * k, 0.0), jtr(k, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t a = 0; a < k; ++a) {
        jtr[a] -= jac[i * k + a] * r[i];
        for (std::size_t b = 0; b < k; ++b) jtj[a * k + b] += jac[i * k + a] * jac[i * k + b];
      }
    }
    bool improved = false;
    double step_norm = 0.0;
    while (lambda < 1e16) {
      std::vector<double> damped = jtj;
      for (std::size_t a = 0; a < k; ++a) damped[a * k + a] += lambda * std::max(jtj[a * k + a], 1e-300);
      std::vector<double> delta;
      if (!solve_small(damped, jtr, k, delta)) {
        lambda *= 10.0;
        continue;
      }
      std::vector<double> trial = p;
      for (std::size_t a = 0; a < k; ++a) trial[a] += delta[a];
      if (project) project(trial);
      std::vector<double> tr, tj;
      fn(trial, tr, tj);
      const double tc = sum_sq(tr);
      if (std::isfinite(tc) && tc < cost) {
        step_norm = 0.0;
        double p_norm = 0.0;
        for (std::size_t a = 0; a < k; ++a) {
          step_norm += (trial[a] - p[a]) * (trial[a] - p[a]);
          p_norm += p[a] * p[a];
        }
        const double rel_gain = (cost - tc) / cost;
        p = std::move(trial);
        r = std::move(tr);
        jac = std::move(tj);
        cost = tc;
        lambda = std::max(lambda * 0.3, 1e-12);
        improved = true;
        if (rel_gain < 1e-15 || std::sqrt(step_norm) <= 1e-15 * (std::sqrt(p_norm) + 1e-15)) {
          out.converged = true;
        }
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) {
      // No descent direction left at any damping: a stationary point.
      out.converged = true;
      break;
    }
    if (out.converged) break;
  }
  out.p = p;
  out.sse = cost;
  return out;
}

void check_points(std::span<const XY> points, std::size_t min_points, const char* what) {
  if (points.size() < min_points)
    throw ValidationError(fmt::format("{} needs at least {} points, got {}", what, min_points, points.size()));
  for (const auto& p : points) {
    if (!(p.x > 0.0) || !(p.y > 0.0) || !std::isfinite(p.x) || !std::isfinite(p.y))
      throw ValidationError(fmt::format("{} needs positive finite values, got ({}, {})", what, p.x, p.y));
  }
}

// ln y = b - alpha * u with u = ln x - mean(ln x).
struct LogLine {
  double b = 0.0;
  double alpha = 0.0;
  double mean_u = 0.0;
};

LogLine log_ols(std::span<const XY> points, double shift = 0.0) {
  const double m = static_cast<double>(points.size());
  double mu = 0.0, mz = 0.0;
  for (const auto& p : points) {
    mu += std::log(p.x);
    mz += std::log(p.y - shift);
  }
  mu /= m;
  mz /= m;
  double suu = 0.0, suz = 0.0;
  for (const auto& p : points) {
    const double u = std::log(p.x) - mu;
    suu += u * u;
    suz += u * (std::log(p.y - shift) - mz);
  }
  if (suu == 0.0) throw ValidationError("power-law fit needs at least two distinct x values");
  return {mz, -suz / suu, mu};
}

}  // namespace

double PowerLawFit::predict(double x) const { return std::pow(x_c / x, alpha); }

PowerLawFit fit_power(std::span<const XY> points, FitMethod method) {
  check_points(points, 2, "power-law fit");
  LogLine line = log_ols(points);
  if (method == FitMethod::kGapSpace) {
    const double mu = line.mean_u;
    auto fn = [&](const std::vector<double>& p, std::vector<double>& r, std::vector<double>& j) {
      r.resize(points.size());
      j.resize(points.size() * 2);
      for (std::size_t i = 0; i < points.size(); ++i) {
        const double u = std::log(points[i].x) - mu;
        const double pred = std::exp(p[0] - p[1] * u);
        r[i] = pred - points[i].y;
        j[i * 2] = pred;
        j[i * 2 + 1] = -u * pred;
      }
    };
    const LmResult lm = levenberg_marquardt({line.b, line.alpha}, fn, nullptr);
    line.b = lm.p[0];
    line.alpha = lm.p[1];
  }
  PowerLawFit fit;
  fit.alpha = line.alpha;
  // ln y = (b + alpha * mean_u) - alpha ln x = alpha (ln X_c - ln x)
  const double a = line.b + line.alpha * line.mean_u;
  fit.x_c = line.alpha != 0.0 ? std::exp(a / line.alpha) : std::numeric_limits<double>::infinity();
  fit.n_points = static_cast<int>(points.size());
  fit.method = method;
  const double alpha = line.alpha, b = line.b, mu = line.mean_u;
  const auto acc = r2_mape(points, [&](double x) { return std::exp(b - alpha * (std::log(x) - mu)); });
  fit.r2 = acc.r2;
  fit.mape = acc.mape;
  return fit;
}

double BivariateFit::predict(double x1, double x2) const {
  return std::pow(c1 / x1, beta1) * std::pow(c2 / x2, beta2);
}

BivariateFit fit_bivariate(std::span<const XYZ> points, FitMethod method) {
  if (points.size() < 3)
    throw ValidationError(fmt::format("bivariate fit needs at least 3 points, got {}", points.size()));
  for (const auto& p : points) {
    if (!(p.x1 > 0.0) || !(p.x2 > 0.0) || !(p.y > 0.0))
      throw ValidationError("bivariate fit needs positive values");
  }
  const double m = static_cast<double>(points.size());
  double m1 = 0.0, m2 = 0.0, mz = 0.0;
  for (const auto& p : points) {
    m1 += std::log(p.x1);
    m2 += std::log(p.x2);
    mz += std::log(p.y);
  }
  m1 /= m;
  m2 /= m;
  mz /= m;
  double s11 = 0.0, s22 = 0.0, s12 = 0.0, s1z = 0.0, s2z = 0.0;
  for (const auto& p : points) {
    const double u1 = std::log(p.x1) - m1, u2 = std::log(p.x2) - m2, z = std::log(p.y) - mz;
    s11 += u1 * u1;
    s22 += u2 * u2;
    s12 += u1 * u2;
    s1z += u1 * z;
    s2z += u2 * z;
  }
  const double det = s11 * s22 - s12 * s12;
  if (s11 == 0.0 || s22 == 0.0 || det <= 1e-12 * s11 * s22)
    throw ValidationError("rank-deficient bivariate design: the two variables are not independent");
  // z = -beta1 u1 - beta2 u2
  double beta1 = -(s22 * s1z - s12 * s2z) / det;
  double beta2 = -(s11 * s2z - s12 * s1z) / det;
  double b = mz;

  if (method == FitMethod::kGapSpace) {
    auto fn = [&](const std::vector<double>& p, std::vector<double>& r, std::vector<double>& j) {
      r.resize(points.size());
      j.resize(points.size() * 3);
      for (std::size_t i = 0; i < points.size(); ++i) {
        const double u1 = std::log(points[i].x1) - m1, u2 = std::log(points[i].x2) - m2;
        const double pred = std::exp(p[0] - p[1] * u1 - p[2] * u2);
        r[i] = pred - points[i].y;
        j[i * 3] = pred;
        j[i * 3 + 1] = -u1 * pred;
        j[i * 3 + 2] = -u2 * pred;
      }
    };
    const LmResult lm = levenberg_marquardt({b, beta1, beta2}, fn, nullptr);
    b = lm.p[0];
    beta1 = lm.p[1];
    beta2 = lm.p[2];
  }

  BivariateFit fit;
  fit.beta1 = beta1;
  fit.beta2 = beta2;
  const double intercept = b + beta1 * m1 + beta2 * m2;  // ln y = intercept - beta1 ln x1 - beta2 ln x2
  fit.c1 = beta1 != 0.0 ? std::exp(intercept / (2.0 * beta1)) : std::numeric_limits<double>::infinity();
  fit.c2 = beta2 != 0.0 ? std::exp(intercept / (2.0 * beta2)) : std::numeric_limits<double>::infinity();
  fit.n_points = static_cast<int>(points.size());
  fit.method = method;
  std::vector<double> truth, pred;
  for (const auto& p : points) {
    truth.push_back(p.y);
    pred.push_back(std::exp(b - beta1 * (std::log(p.x1) - m1) - beta2 * (std::log(p.x2) - m2)));
  }
  const auto acc = r2_mape(truth, pred);
  fit.r2 = acc.r2;
  fit.mape = acc.mape;
  return fit;
}

std::vector<XYZ> depth_width_points(std::span<const DepthWidthGap> rows) {
  std::vector<XYZ> out;
  for (const auto& r : rows) out.push_back({static_cast<double>(r.depth), static_cast<double>(r.width), r.gap});
  return out;
}

std::vector<XYZ> params_ratio_points(std::span<const DepthWidthGap> rows) {
  std::vector<XYZ> out;
  for (const auto& r : rows) {
    const auto cfg = model::grid_config(r.depth, r.width);
    out.push_back({static_cast<double>(model::param_count(cfg)),
                   static_cast<double>(r.depth) / static_cast<double>(r.width), r.gap});
  }
  return out;
}

double ShiftedFit::predict(double t) const { return alpha_t * std::pow(t, -beta_t) + gamma; }

ShiftedFit fit_shifted(std::span<const XY> points) {
  check_points(points, 4, "shifted power-law fit");
  double ymin = std::numeric_limits<double>::infinity();
  for (const auto& p : points) ymin = std::min(ymin, p.y);
  const double gmax = ymin * (1.0 - 1e-12);

  // Profile objective: best log-linear fit of y - gamma, scored in gap space.
  auto profile = [&](double gamma, LogLine* line_out) {
    const LogLine line = log_ols(points, gamma);
    if (line_out) *line_out = line;
    double s = 0.0;
    for (const auto& p : points) {
      const double pred = std::exp(line.b - line.alpha * (std::log(p.x) - line.mean_u)) + gamma;
      s += (pred - p.y) * (pred - p.y);
    }
    return s;
  };

  std::vector<double> cand;
  for (int i = 0; i <= 64; ++i) cand.push_back(gmax * i / 64.0);
  for (int j = 2; j <= 12; ++j) cand.push_back(ymin * (1.0 - std::pow(10.0, -j)));
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  std::size_t best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < cand.size(); ++i) {
    const double v = profile(cand[i], nullptr);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  double lo = cand[best > 0 ? best - 1 : 0];
  double hi = cand[std::min(best + 1, cand.size() - 1)];
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
  double f1 = profile(x1, nullptr), f2 = profile(x2, nullptr);
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, ymin); ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = profile(x1, nullptr);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = profile(x2, nullptr);
    }
  }
  double gamma = cand[best];
  if (std::min(f1, f2) < best_val) gamma = f1 < f2 ? x1 : x2;
  LogLine line;
  profile(gamma, &line);

  // Polish (ln alpha_t, beta_t, gamma) jointly in gap space.
  const double mu = line.mean_u;
  auto fn = [&](const std::vector<double>& p, std::vector<double>& r, std::vector<double>& j) {
    r.resize(points.size());
    j.resize(points.size() * 3);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double u = std::log(points[i].x) - mu;
      const double pw = std::exp(p[0] - p[1] * u);
      r[i] = pw + p[2] - points[i].y;
      j[i * 3] = pw;
      j[i * 3 + 1] = -u * pw;
      j[i * 3 + 2] = 1.0;
    }
  };
  auto project = [&](std::vector<double>& p) { p[2] = std::clamp(p[2], 0.0, gmax); };
  const LmResult lm = levenberg_marquardt({line.b, line.alpha, gamma}, fn, project);

  ShiftedFit fit;
  fit.n_points = static_cast<int>(points.size());
  fit.converged = lm.converged;
  fit.alpha_t = std::exp(lm.p[0] + lm.p[1] * mu);
  fit.beta_t = lm.p[1];
  fit.gamma = lm.p[2];
  fit.sse = lm.sse;

  // The pure power law is in the feasible set; never return anything worse.
  const PowerLawFit pure = fit_power(points, FitMethod::kGapSpace);
  const double pure_sse = sse(points, [&](double x) { return pure.predict(x); });
  if (pure_sse < fit.sse) {
    fit.alpha_t = std::pow(pure.x_c, pure.alpha);
    fit.beta_t = pure.alpha;
    fit.gamma = 0.0;
    fit.sse = pure_sse;
  }
  const auto acc = r2_mape(points, [&](double t) { return fit.predict(t); });
  fit.r2 = acc.r2;
  fit.mape = acc.mape;
  return fit;
}

}  // namespace nco::scaling
