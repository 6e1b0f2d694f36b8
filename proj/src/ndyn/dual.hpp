#pragma once

#include <cmath>

namespace ndyn {

// Second-order forward-mode scalar: value, first and second derivative with
// respect to a single seed variable. Used to differentiate closed-form map
// pieces through the slowly varying factors without hand-written chain rules.
struct D2 {
  double v = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;

  static D2 var(double x) { return {x, 1.0, 0.0}; }
  static D2 cst(double c) { return {c, 0.0, 0.0}; }
};

inline D2 operator+(D2 a, D2 b) { return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2}; }
inline D2 operator-(D2 a, D2 b) { return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2}; }
inline D2 operator-(D2 a) { return {-a.v, -a.d1, -a.d2}; }
inline D2 operator*(D2 a, D2 b) {
  return {a.v * b.v, a.d1 * b.v + a.v * b.d1,
          a.d2 * b.v + 2.0 * a.d1 * b.d1 + a.v * b.d2};
}
inline D2 operator/(D2 a, D2 b) {
  double iv = 1.0 / b.v;
  double q = a.v * iv;
  double q1 = (a.d1 - q * b.d1) * iv;
  double q2 = (a.d2 - 2.0 * q1 * b.d1 - q * b.d2) * iv;
  return {q, q1, q2};
}
inline D2 operator+(D2 a, double c) { return {a.v + c, a.d1, a.d2}; }
inline D2 operator+(double c, D2 a) { return a + c; }
inline D2 operator-(D2 a, double c) { return {a.v - c, a.d1, a.d2}; }
inline D2 operator-(double c, D2 a) { return {c - a.v, -a.d1, -a.d2}; }
inline D2 operator*(D2 a, double c) { return {a.v * c, a.d1 * c, a.d2 * c}; }
inline D2 operator*(double c, D2 a) { return a * c; }
inline D2 operator/(D2 a, double c) { return a * (1.0 / c); }
inline D2 operator/(double c, D2 a) { return D2::cst(c) / a; }

// f(a) with f' and f'' supplied, composed by the chain rule.
inline D2 lift(D2 a, double f, double fp, double fpp) {
  return {f, fp * a.d1, fpp * a.d1 * a.d1 + fp * a.d2};
}

inline D2 log(D2 a) {
  double iv = 1.0 / a.v;
  return lift(a, std::log(a.v), iv, -iv * iv);
}
inline D2 exp(D2 a) {
  double e = std::exp(a.v);
  return lift(a, e, e, e);
}
inline D2 pow(D2 a, double p) {
  double f = std::pow(a.v, p);
  double fp = p * f / a.v;
  return lift(a, f, fp, fp * (p - 1.0) / a.v);
}

}  // namespace ndyn
