#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "ndyn/errors.hpp"

namespace ndyn {

struct RootResult {
  double x = 0.0;
  int iterations = 0;
  bool newton_only = true;  // false once a bisection safeguard fired
};

// Safeguarded Newton for a strictly monotone f on [lo, hi] with f(lo) and
// f(hi) of opposite sign. Newton steps that leave the bracket, or fail to
// shrink it, fall back to bisection. After max_newton iterations without
// meeting the tolerance the remaining work is pure bisection.
template <typename F, typename DF>
RootResult newton_bisect(F&& f, DF&& df, double lo, double hi, double rel_tol,
                         int max_newton = 50, int max_iter = 200) {
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return {lo, 0, true};
  if (fhi == 0.0) return {hi, 0, true};
  if ((flo > 0) == (fhi > 0))
    fail(ErrCode::Convergence,
         "newton_bisect: no sign change on bracket [" + std::to_string(lo) +
             ", " + std::to_string(hi) + "]");

  RootResult res;
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < max_iter; ++it) {
    res.iterations = it + 1;
    double fx = f(x);
    if (fx == 0.0) {
      res.x = x;
      return res;
    }
    if ((fx > 0) == (fhi > 0)) {
      hi = x;
      fhi = fx;
    } else {
      lo = x;
      flo = fx;
    }
    double width = hi - lo;
    double scale = std::max(std::fabs(lo), std::fabs(hi));
    if (width <= rel_tol * scale ||
        width <= std::numeric_limits<double>::denorm_min()) {
      res.x = 0.5 * (lo + hi);
      return res;
    }
    double xn = std::numeric_limits<double>::quiet_NaN();
    if (it < max_newton) {
      double d = df(x);
      if (d != 0.0 && std::isfinite(d)) xn = x - fx / d;
    }
    if (std::isfinite(xn) && xn > lo && xn < hi) {
      x = xn;
    } else {
      x = 0.5 * (lo + hi);
      res.newton_only = false;
    }
  }
  fail(ErrCode::Convergence,
       "newton_bisect: no convergence, bracket [" + std::to_string(lo) + ", " +
           std::to_string(hi) + "]");
}

}  // namespace ndyn
