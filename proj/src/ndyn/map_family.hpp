#pragma once

#include <array>

#include "json.hpp"
#include "ndyn/dual.hpp"
#include "ndyn/karamata.hpp"

namespace ndyn {

enum class Branch { Minus, Plus };

// Branch step in offset coordinates from the departing fixed point:
// phi(z) = z + z^{1+ell} L(z). The D2 form carries the first two
// derivatives, which double as g' and g'' there.
double neutral_step(double z, double ell, const SvExpr& L);
D2 neutral_step_d2(double z, double ell, const SvExpr& L);

// Point on [-1,1] stored as a signed offset from the nearest of {-1, 0, 1}.
// Distances to the endpoints stay exact long after 1+x or 1-x would have
// collapsed in raw coordinates.
struct PointRep {
  int anchor = 0;
  double off = 0.0;

  double x() const { return double(anchor) + off; }

  static PointRep from_double(double x) {
    int a = x < -0.5 ? -1 : (x > 0.5 ? 1 : 0);
    return {a, x - double(a)};
  }
  // Re-anchor only when the offset has left the nearest-anchor band; exact
  // offsets near an anchor are kept untouched.
  static PointRep normalized(int anchor, double off) {
    if (off > 0.5 || off < -0.5) return from_double(double(anchor) + off);
    return {anchor, off};
  }
};

// Knobs for filling the two gaps the local forms leave open. Matching the
// neighbor derivatives at both ends plus the integral leaves the derivative
// interpolant one odd-jet degree of freedom; it starts at zero and is
// searched outward on monotonicity failures, scaled by skew_scale.
struct GlueSpec {
  double skew_scale = 1.0;
  int max_retries = 8;
};

struct MapParams {
  double ell1 = 1.0, ell2 = 1.0;  // neutral exponents at -1 and +1
  double k1 = 1.0, k2 = 1.0;      // orders of the two branch ends at 0
  double a1 = 1.0, a2 = 1.0;      // coefficients of the power forms at 0
  double iota = 0.25;             // half-width of the pure power window at 0
  SvExpr Lm1{SvVariant::AtZero, SvNode::konst(1.0)};
  SvExpr Lp1{SvVariant::AtZero, SvNode::konst(1.0)};
  GlueSpec glue;
  // witnesses for the lower bound on g'-1 over the image of the power
  // window; computed during build, not read from configuration
  double eps1 = 0.0, eps2 = 0.0;
};

MapParams map_params_from_json(const nlohmann::json& j);
nlohmann::json map_params_to_json(const MapParams& p);

// One filled gap [A,B]: the derivative is two quartics about the midpoint
// knot, C^3 there, matching value and slope of the neighbor derivatives at
// both ends and integrating to the required increment. g itself is the
// piecewise quintic primitive.
struct GluePoly {
  double A = 0.0, B = 0.0;  // gap endpoints
  double M = 0.0, h = 0.0;  // knot and half-width
  double c0 = 0, c1 = 0, c2 = 0, c3 = 0, p4 = 0, q4 = 0;
  double gM = 0.0;  // value of g at the knot

  double deriv(double x) const {
    double u = (x - M) / h;
    double e4 = u < 0.0 ? p4 : q4;
    return c0 + u * (c1 + u * (c2 + u * (c3 + u * e4)));
  }
  double second(double x) const {
    double u = (x - M) / h;
    double e4 = u < 0.0 ? p4 : q4;
    return (c1 + u * (2.0 * c2 + u * (3.0 * c3 + u * 4.0 * e4))) / h;
  }
  double value(double x) const {
    double u = (x - M) / h;
    double e4 = u < 0.0 ? p4 : q4;
    return gM + h * u *
                    (c0 + u * (c1 / 2 + u * (c2 / 3 + u * (c3 / 4 + u * e4 / 5))));
  }
};

class MapRealization {
 public:
  MapParams params;

  // region boundaries; on the minus branch [-1, Am) is the neutral window,
  // [Am, Bm] the glue, (Bm, 0] the power window, mirrored on the plus side
  double zA = 0.0;  // a2 * iota^k2, offset of Am from -1
  double wA = 0.0;  // a1 * iota^k1, offset of Bp from +1
  double Am = 0.0, Bm = 0.0, Ap = 0.0, Bp = 0.0;
  GluePoly glue_m, glue_p;

  double beta1 = 0.0, beta2 = 0.0, beta = 0.0;
  bool second_deriv_unbounded_m1 = false;
  bool second_deriv_unbounded_p1 = false;

  // expansion-check report: first index whose return cell sits inside the
  // power window, per side, and the smallest n-step derivative seen there
  int n_minus = 0, n_plus = 0;
  double lambda_attained = 0.0;
};

MapRealization build_map(MapParams params);

PointRep eval_g(const MapRealization& m, PointRep x, Branch side);
PointRep eval_g(const MapRealization& m, PointRep x);  // side from sign(x)
double eval_g_prime(const MapRealization& m, PointRep x, Branch side);
double eval_g_prime(const MapRealization& m, PointRep x);
double eval_g_second(const MapRealization& m, PointRep x, Branch side);
double eval_g_second(const MapRealization& m, PointRep x);

// Unique preimage of y on the chosen half-interval. Closed form on the
// power window, safeguarded Newton elsewhere, always in offset coordinates.
PointRep inverse_branch(const MapRealization& m, Branch side, PointRep y);

}  // namespace ndyn
