#pragma once

#include <cmath>
#include <functional>

namespace iomarket {

// Golden-section maximization on [lo, hi]; terminates when the bracket is
// narrower than tol. Assumes unimodality inside the bracket.
inline double golden_max(const std::function<double(double)>& fn, double lo, double hi, double tol) {
  static const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = fn(x1);
  double f2 = fn(x2);
  while (b - a > tol) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = fn(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = fn(x1);
    }
  }
  return (a + b) / 2.0;
}

// Coarse scan to bracket the best cell, then golden-section refinement inside
// it. Robust when the objective has a flat region or participation kinks next
// to a concave ridge.
inline double scan_then_golden_max(const std::function<double(double)>& fn, double lo, double hi,
                                   int scan_points, double tol) {
  if (scan_points < 3) scan_points = 3;
  double best_x = lo;
  double best_v = fn(lo);
  int best_i = 0;
  for (int i = 1; i < scan_points; ++i) {
    const double x = lo + (hi - lo) * i / (scan_points - 1);
    const double v = fn(x);
    if (v > best_v) {
      best_v = v;
      best_x = x;
      best_i = i;
    }
  }
  const double cell = (hi - lo) / (scan_points - 1);
  const double a = best_i == 0 ? lo : best_x - cell;
  const double b = best_i == scan_points - 1 ? hi : best_x + cell;
  const double refined = golden_max(fn, a, b, tol);
  return fn(refined) >= best_v ? refined : best_x;
}

}  // namespace iomarket
