#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "inklab/errors.hpp"

namespace inklab {

struct AccuracyPoint {
  double p = 0.0;
  double accuracy = 0.0;
  std::size_t n = 1;

  static AccuracyPoint make(double p, double accuracy, std::size_t n) {
    if (!(p >= 0.0 && p <= 1.0)) throw RangeError("accuracy point p outside [0,1]");
    if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw RangeError("accuracy outside [0,1]");
    if (n < 1) throw ArgumentError("accuracy point needs n >= 1");
    return {p, accuracy, n};
  }
};

inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

// Case-insensitive containment. Empty needles never match.
inline bool contains_ci(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return false;
  return ascii_lower(haystack).find(ascii_lower(needle)) != std::string::npos;
}

/// Fraction of predictions that contain at least one of their reference
/// answers (case-insensitive). Paraphrases count as misses.
inline double substring_accuracy(std::span<const std::string> predictions,
                                 std::span<const std::vector<std::string>> references) {
  if (predictions.size() != references.size()) {
    throw ArgumentError("predictions and references differ in length");
  }
  if (predictions.empty()) throw ArgumentError("no predictions to score");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (references[i].empty()) throw ArgumentError("sample " + std::to_string(i) + " has no reference answers");
    const bool hit = std::any_of(references[i].begin(), references[i].end(),
                                 [&](const std::string& r) { return contains_ci(predictions[i], r); });
    hits += hit ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

struct DropRatioResult {
  double value = 0.0;
  double a0 = 0.0;
  double a10 = 0.0;
  double a100 = 0.0;
};

inline constexpr double kDropRatioEpsilon = 1e-9;

// Share of the total 0%->100% accuracy loss already incurred at 10%.
// Linear degradation gives exactly 0.1. Negative values are returned as-is.
inline DropRatioResult drop_ratio_from(double a0, double a10, double a100) {
  if (std::fabs(a0 - a100) < kDropRatioEpsilon) {
    throw DegenerateError("drop ratio undefined: Acc(0%) and Acc(100%) coincide");
  }
  return {(a0 - a10) / (a0 - a100), a0, a10, a100};
}

inline DropRatioResult drop_ratio(std::span<const AccuracyPoint> points) {
  auto at = [&](double p) {
    for (const auto& pt : points) {
      if (std::fabs(pt.p - p) <= 1e-12) return pt.accuracy;
    }
    throw ArgumentError("accuracy curve has no point at p=" + std::to_string(p));
  };
  return drop_ratio_from(at(0.0), at(0.1), at(1.0));
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ArgumentError("pearson: length mismatch");
  if (x.size() < 2) throw ArgumentError("pearson: need at least two observations");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DegenerateError("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// 1-based ranks; tied values share the average of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ArgumentError("spearman: length mismatch");
  if (x.size() < 2) throw ArgumentError("spearman: need at least two observations");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

// Accuracy model c0 + c1 / (1 + kappa p). kappa plays the role of b/a - 1.
struct FitResult {
  double c0 = 0.0;
  double c1 = 0.0;
  double kappa = 0.0;
  double sse = 0.0;
  double r2 = 1.0;

  double operator()(double p) const { return c0 + c1 / (1.0 + kappa * p); }
};

struct FitOptions {
  double kappa_min = 1e-2;
  double kappa_max = 1e5;
  std::size_t grid_points = 281;  // 40 per decade
  double refine_tolerance = 1e-12;  // on log(kappa)
};

namespace detail {

struct LinearFit {
  double c0 = 0.0;
  double c1 = 0.0;
  double sse = 0.0;
};

// Least squares for y ~ c0 + c1 * g(p) with g(p) = 1 / (1 + kappa p).
inline std::optional<LinearFit> solve_for_kappa(std::span<const double> p, std::span<const double> y,
                                                double kappa) {
  const double n = static_cast<double>(p.size());
  double sg = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    sg += 1.0 / (1.0 + kappa * p[i]);
    sy += y[i];
  }
  const double mg = sg / n, my = sy / n;
  double sgg = 0.0, sgy = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double dg = 1.0 / (1.0 + kappa * p[i]) - mg;
    sgg += dg * dg;
    sgy += dg * (y[i] - my);
  }
  // Relative singularity test: the basis column is numerically constant.
  if (!(sgg > 1e-24 * std::max(1.0, mg * mg) * n)) return std::nullopt;
  LinearFit f;
  f.c1 = sgy / sgg;
  f.c0 = my - f.c1 * mg;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double r = y[i] - (f.c0 + f.c1 / (1.0 + kappa * p[i]));
    f.sse += r * r;
  }
  return f;
}

}  // namespace detail

/// Fits c0 + c1 / (1 + kappa p) by profiling out (c0, c1) with a closed-form
/// linear solve, scanning log(kappa) on a fixed grid and polishing the best
/// cell with golden-section search. Fully deterministic.
inline FitResult fit_curve(std::span<const AccuracyPoint> points, const FitOptions& opt = {}) {
  if (points.size() < 4) throw ArgumentError("fit_curve needs at least 4 points, got " + std::to_string(points.size()));
  std::vector<double> p, y;
  for (const auto& pt : points) {
    p.push_back(pt.p);
    y.push_back(pt.accuracy);
  }
  {
    auto sorted = p;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw ArgumentError("fit_curve needs distinct p values");
    }
  }

  const double mean_y = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double sst = 0.0;
  for (double v : y) sst += (v - mean_y) * (v - mean_y);
  // Constant data: the curvature is unidentifiable; report a flat fit.
  if (sst <= 1e-30) return FitResult{mean_y, 0.0, 0.0, 0.0, 1.0};

  const double lo = std::log(opt.kappa_min), hi = std::log(opt.kappa_max);
  const std::size_t m = std::max<std::size_t>(opt.grid_points, 3);
  std::vector<double> grid(m);
  for (std::size_t i = 0; i < m; ++i) grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(m - 1);

  auto sse_at = [&](double log_kappa) {
    auto f = detail::solve_for_kappa(p, y, std::exp(log_kappa));
    return f ? f->sse : std::numeric_limits<double>::infinity();
  };

  std::size_t best = m;
  double best_sse = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m; ++i) {
    const double s = sse_at(grid[i]);
    if (s < best_sse) {
      best_sse = s;
      best = i;
    }
  }
  if (best == m) throw DegenerateError("fit_curve: linear solve singular at every kappa");

  // Golden-section refinement on the bracketing cells.
  double a = grid[best == 0 ? 0 : best - 1];
  double b = grid[best + 1 == m ? m - 1 : best + 1];
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
  double f1 = sse_at(x1), f2 = sse_at(x2);
  while (b - a > opt.refine_tolerance) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = sse_at(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = sse_at(x2);
    }
  }
  double log_kappa = grid[best];
  for (double cand : {x1, x2, 0.5 * (a + b)}) {
    const double s = sse_at(cand);
    if (s < best_sse) {
      best_sse = s;
      log_kappa = cand;
    }
  }

  const double kappa = std::exp(log_kappa);
  const auto lin = detail::solve_for_kappa(p, y, kappa);
  FitResult out{lin->c0, lin->c1, kappa, lin->sse, 1.0 - lin->sse / sst};
  // The constant model is nested (c1 = 0); never report worse than it.
  if (out.sse > sst) out = FitResult{mean_y, 0.0, kappa, sst, 0.0};
  return out;
}

/// Drop ratio implied by a fitted curve, evaluated at p = 0, 0.1, 1.
inline double predicted_drop_ratio(const FitResult& fit) {
  if (fit.c1 == 0.0) throw DegenerateError("fitted curve is flat (c1 = 0)");
  if (!(fit.kappa >= 0.0)) throw DomainError("kappa must be >= 0");
  return drop_ratio_from(fit(0.0), fit(0.1), fit(1.0)).value;
}

}  // namespace inklab
