#pragma once

#include <cmath>
#include <functional>

#include "ndyn/errors.hpp"

namespace ndyn {

namespace detail {

inline double simpson(double a, double b, double fa, double fm, double fb) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

template <typename F>
double adapt(F&& f, double a, double b, double fa, double fm, double fb,
             double whole, double tol, int depth, int max_depth, long& evals,
             long max_evals) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  evals += 2;
  if (evals > max_evals)
    fail(ErrCode::Quadrature, "adaptive quadrature: evaluation budget exceeded");
  double left = simpson(a, m, fa, flm, fm);
  double right = simpson(m, b, fm, frm, fb);
  double err = left + right - whole;
  if (depth >= max_depth) {
    if (std::fabs(err) > 64.0 * tol)
      fail(ErrCode::Quadrature, "adaptive quadrature: refinement limit hit");
    return left + right + err / 15.0;
  }
  if (std::fabs(err) <= 15.0 * tol) return left + right + err / 15.0;
  return adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, max_depth,
               evals, max_evals) +
         adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, max_depth,
               evals, max_evals);
}

}  // namespace detail

// Adaptive Simpson with an absolute tolerance. Throws Quadrature on budget
// or refinement-depth exhaustion.
template <typename F>
double integrate(F&& f, double a, double b, double abs_tol,
                 long max_evals = 2'000'000) {
  if (a == b) return 0.0;
  double m = 0.5 * (a + b);
  double fa = f(a), fm = f(m), fb = f(b);
  long evals = 3;
  double whole = detail::simpson(a, b, fa, fm, fb);
  return detail::adapt(f, a, b, fa, fm, fb, whole, abs_tol, 0, 48, evals,
                       max_evals);
}

// Fixed-order Gauss-Legendre on [a,b]; enough for smooth cell averages.
template <typename F>
double gauss5(F&& f, double a, double b) {
  static const double xs[5] = {-0.906179845938663992797626878299,
                               -0.538469310105683091036314420700, 0.0,
                               0.538469310105683091036314420700,
                               0.906179845938663992797626878299};
  static const double ws[5] = {0.236926885056189087514264040720,
                               0.478628670499366468041291514836,
                               0.568888888888888888888888888889,
                               0.478628670499366468041291514836,
                               0.236926885056189087514264040720};
  double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double s = 0.0;
  for (int i = 0; i < 5; ++i) s += ws[i] * f(c + h * xs[i]);
  return s * h;
}

}  // namespace ndyn
