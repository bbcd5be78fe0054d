#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>

#include "resadmm/linalg.hpp"

namespace resadmm {

// Positive schedule k -> value, linear ramp from `start` to `end` over `ramp` steps.
struct Schedule {
  double start = 1.0;
  double end = 1.0;
  long ramp = 0;

  static Schedule constant(double v) { return Schedule{v, v, 0}; }
  double at(long k) const {
    if (ramp <= 0 || k >= ramp) return end;
    if (k <= 0) return start;
    return start + (end - start) * static_cast<double>(k) / static_cast<double>(ramp);
  }
  double min() const { return std::min(start, end); }
  double max() const { return std::max(start, end); }
  bool non_decreasing() const { return end >= start; }
};

enum class Variant { prox_point, prox_grad };

struct InnerOptions {
  double tol = 1e-8;
  int max_iter = 500;
  double armijo_c = 1e-4;
  double shrink = 0.5;
  bool warn = false;
};

struct InnerResult {
  Matrix x;
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Gradient descent with Armijo backtracking. The trial step is the
// Barzilai-Borwein step of the previous pair; acceptance is monotone.
inline InnerResult minimize_gd(const Matrix& x0, const std::function<double(const Matrix&)>& f,
                               const std::function<Matrix(const Matrix&)>& grad, const InnerOptions& opt = {}) {
  InnerResult r;
  r.x = x0;
  r.value = f(x0);
  Matrix g = grad(x0);
  r.grad_norm = frob_norm(g);
  const double f0 = r.value, g0 = r.grad_norm;
  double step = 1.0;
  Matrix x_prev, g_prev;
  for (int it = 0; it < opt.max_iter && r.grad_norm > opt.tol; ++it) {
    if (it > 0) {
      const Matrix s = sub(r.x, x_prev), y = sub(g, g_prev);
      const double sy = inner(s, y);
      if (sy > 0) step = std::clamp(inner(s, s) / sy, 1e-10, 1e10);
    }
    const double gg = r.grad_norm * r.grad_norm;
    double t = step, fv = 0.0;
    Matrix xn;
    bool accepted = false;
    for (int bt = 0; bt < 80; ++bt) {
      xn = axpy(-t, g, r.x);
      fv = f(xn);
      // a few ulps of slack so the search keeps reducing the gradient once
      // the decrease itself drops below rounding
      const double slack = 8.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(r.value));
      if (std::isfinite(fv) && fv <= r.value - opt.armijo_c * t * gg + slack) {
        accepted = true;
        break;
      }
      t *= opt.shrink;
    }
    if (!accepted) break;
    x_prev = std::move(r.x);
    g_prev = std::move(g);
    r.x = std::move(xn);
    r.value = fv;
    g = grad(r.x);
    r.grad_norm = frob_norm(g);
    r.iterations = it + 1;
    step = t;
  }
  if (r.value > f0) {  // slack steps must never end above the warm start
    r.x = x0;
    r.value = f0;
    r.grad_norm = g0;
  }
  r.converged = r.grad_norm <= opt.tol;
  if (!r.converged && opt.warn)
    std::fprintf(stderr, "warning: inner solver stopped at gradient norm %.3e after %d iterations\n",
                 r.grad_norm, r.iterations);
  return r;
}

struct Scalar1DResult {
  double x;
  double value;
  double deriv;
};

// Global minimizer of a smooth 1-D function whose stationary points all lie in
// [lo, hi] with f'(lo) <= 0 <= f'(hi). Scans subintervals for sign changes of
// f' and refines each with safeguarded Newton (bisection fallback).
template <class F, class D, class DD>
Scalar1DResult minimize_1d_bracketed(F f, D df, DD ddf, double lo, double hi, double tol = 1e-10,
                                     int scan = 64) {
  auto refine = [&](double a, double b) {
    double fa = df(a);
    double x = 0.5 * (a + b);
    for (int it = 0; it < 200; ++it) {
      const double g = df(x);
      if (std::abs(g) <= tol) break;
      if ((g < 0) == (fa < 0)) {
        a = x;
        fa = g;
      } else {
        b = x;
      }
      const double h = ddf(x);
      double xn = (h > 0) ? x - g / h : 0.5 * (a + b);
      if (!(xn > a && xn < b)) xn = 0.5 * (a + b);
      if (b - a <= 4 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(x))) {
        x = xn;
        break;
      }
      x = xn;
    }
    return x;
  };
  Scalar1DResult best{lo, f(lo), df(lo)};
  bool have = false;
  double a = lo, ga = df(lo);
  for (int s = 1; s <= scan; ++s) {
    const double b = lo + (hi - lo) * static_cast<double>(s) / scan;
    const double gb = df(b);
    if (ga <= 0 && gb >= 0) {
      const double x = (ga == 0) ? a : (gb == 0 ? b : refine(a, b));
      const double v = f(x);
      if (!have || v < best.value) {
        best = {x, v, df(x)};
        have = true;
      }
    }
    a = b;
    ga = gb;
  }
  return best;
}

}  // namespace resadmm
