#include "ndyn/map_family.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "ndyn/dual.hpp"
#include "ndyn/errors.hpp"
#include "ndyn/rootfind.hpp"

namespace ndyn {

double neutral_step(double z, double ell, const SvExpr& L) {
  if (z == 0.0) return 0.0;
  return z + std::pow(z, 1.0 + ell) * sv_eval(L, z);
}

D2 neutral_step_d2(double z, double ell, const SvExpr& L) {
  D2 Z = D2::var(z);
  return Z + pow(Z, 1.0 + ell) * sv_eval(L, Z);
}

namespace {

void validate_params(const MapParams& p) {
  auto pos = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      fail(ErrCode::Config, std::string(name) + " must be positive and finite");
  };
  pos(p.ell1, "ell1");
  pos(p.ell2, "ell2");
  pos(p.k1, "k1");
  pos(p.k2, "k2");
  pos(p.a1, "a1");
  pos(p.a2, "a2");
  if (!(p.iota > 0.0 && p.iota < 1.0))
    fail(ErrCode::Config, "iota must lie in (0,1)");
  if (p.Lm1.variant != SvVariant::AtZero || p.Lp1.variant != SvVariant::AtZero)
    fail(ErrCode::Config,
         "slow-variation factors must use the at-zero variant");
  validate(p.Lm1);
  validate(p.Lp1);
  if (!(p.glue.skew_scale > 0.0))
    fail(ErrCode::Config, "glue.skew_scale must be positive");
  if (p.glue.max_retries < 0)
    fail(ErrCode::Config, "glue.max_retries must be nonnegative");

  double zA = p.a2 * std::pow(p.iota, p.k2);
  double wA = p.a1 * std::pow(p.iota, p.k1);
  if (!(zA + p.iota < 1.0) || !(wA + p.iota < 1.0))
    fail(ErrCode::Config,
         "power window too wide: its image overlaps the window itself; "
         "shrink iota or the coefficients");
  // the slow-variation factors are evaluated on offsets up to zA / wA
  if (zA > 1.0 / domain_cutoff(p.Lm1) || wA > 1.0 / domain_cutoff(p.Lp1))
    fail(ErrCode::Config,
         "iota too large for the slow-variation factor's domain; shrink iota");
}

// Fill one gap [A,B]. The derivative is modeled as two quartics about the
// midpoint knot sharing their cubic jet there; remaining freedom is fixed by
// the end conditions, the integral, and the knot value, which is retried on
// monotonicity failures.
GluePoly solve_glue(double A, double B, double YA, double YB, double DA,
                    double SA, double DB, double SB, const GlueSpec& spec,
                    const char* side) {
  GluePoly gp;
  gp.A = A;
  gp.B = B;
  gp.h = 0.5 * (B - A);
  gp.M = 0.5 * (A + B);
  if (!(gp.h > 0.0))
    fail(ErrCode::Internal, std::string("glue gap ") + side + " is empty");
  double dY = YB - YA;
  if (!(dY > 0.0))
    fail(ErrCode::GlueNotMonotone,
         std::string("glue ") + side +
             ": the neighboring local forms leave no room for an increasing "
             "interpolant");

  double h = gp.h;

  // The end conditions and the integral pin five of the six coefficients;
  // the odd-jet coefficient c3 spans the leftover null direction
  // (c1,c2,c3,p4,q4) = (1,0,-3,-2,2) and serves as the retry knob.
  auto attempt = [&](double s) -> bool {
    Eigen::Matrix<double, 5, 5> Amat;
    Eigen::Matrix<double, 5, 1> b;
    // unknowns: c0, c1, c2, p4, q4 given c3 = s
    Amat << 1, -1, 1, 1, 0,             // H(A) = DA
        0, 1, -2, -4, 0,                // H'(A) = SA h
        1, 1, 1, 0, 1,                  // H(B) = DB
        0, 1, 2, 0, 4,                  // H'(B) = SB h
        2, 0, 2.0 / 3.0, 0.2, 0.2;      // integral over the gap = dY
    b << DA + s, SA * h - 3.0 * s, DB - s, SB * h - 3.0 * s, dY / h;
    Eigen::Matrix<double, 5, 1> sol = Amat.fullPivLu().solve(b);
    gp.c0 = sol(0);
    gp.c1 = sol(1);
    gp.c2 = sol(2);
    gp.c3 = s;
    gp.p4 = sol(3);
    gp.q4 = sol(4);
    gp.gM = YA + h * (gp.c0 - gp.c1 / 2 + gp.c2 / 3 - gp.c3 / 4 + gp.p4 / 5);
    if (!std::isfinite(gp.c1 + gp.c2 + gp.c3 + gp.p4 + gp.q4 + gp.gM))
      return false;

    // positivity of the derivative: dense sample plus a local refinement
    // around the worst point
    const int n = 4096;
    double worst = 1e300, worst_x = A;
    for (int i = 0; i <= n; ++i) {
      double x = A + (B - A) * double(i) / n;
      double v = gp.deriv(x);
      if (v < worst) {
        worst = v;
        worst_x = x;
      }
    }
    double step = (B - A) / n;
    double lo = std::max(A, worst_x - step), hi = std::min(B, worst_x + step);
    for (int it = 0; it < 80; ++it) {
      double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
      if (gp.deriv(m1) < gp.deriv(m2))
        hi = m2;
      else
        lo = m1;
    }
    worst = std::min(worst, gp.deriv(0.5 * (lo + hi)));
    return worst > 0.0;
  };

  double scale = spec.skew_scale *
                 std::max({std::fabs(DA), std::fabs(DB), std::fabs(SA * h),
                           std::fabs(SB * h), dY / h});
  if (attempt(0.0)) return gp;
  for (int r = 1; r <= spec.max_retries; ++r) {
    double f = std::pow(2.0, (r - 1) / 2);
    double s = (r % 2 == 1 ? scale : -scale) * f;
    if (attempt(s)) return gp;
  }
  fail(ErrCode::GlueNotMonotone,
       std::string("glue ") + side +
           ": no monotone interpolant found after knot retries");
}

double power_deriv(double a, double k, double dist) {
  return a * k * std::pow(dist, k - 1.0);
}

double power_second(double a, double k, double dist) {
  return a * k * (k - 1.0) * std::pow(dist, k - 2.0);
}

// Dispatch target regions. Offsets are used near the anchors, plain x in
// the middle where doubles carry full precision anyway.
enum class Region { NeutralM, GlueM, PowerM, PowerP, GlueP, NeutralP };

Region locate(const MapRealization& m, PointRep p, Branch side) {
  if (side == Branch::Minus) {
    if (p.anchor == 1)
      fail(ErrCode::Domain, "point is outside the minus branch");
    if (p.anchor == -1) {
      if (p.off < 0.0) fail(ErrCode::Domain, "point below -1");
      if (p.off < m.zA) return Region::NeutralM;
      double x = p.x();
      return x <= m.Bm ? Region::GlueM : Region::PowerM;
    }
    if (p.off > 0.0) fail(ErrCode::Domain, "point is outside the minus branch");
    double x = p.x();
    if (x > -m.params.iota) return Region::PowerM;
    return x >= m.Am ? Region::GlueM : Region::NeutralM;
  }
  if (p.anchor == -1)
    fail(ErrCode::Domain, "point is outside the plus branch");
  if (p.anchor == 1) {
    if (p.off > 0.0) fail(ErrCode::Domain, "point above 1");
    double w = -p.off;
    if (w < m.wA) return Region::NeutralP;
    double x = p.x();
    return x >= m.Ap ? Region::GlueP : Region::PowerP;
  }
  if (p.off < 0.0) fail(ErrCode::Domain, "point is outside the plus branch");
  double x = p.off;
  if (x < m.params.iota) return Region::PowerP;
  return x <= m.Bp ? Region::GlueP : Region::NeutralP;
}

Branch default_side(PointRep p) {
  if (p.anchor < 0) return Branch::Minus;
  if (p.anchor > 0) return Branch::Plus;
  return p.off > 0.0 ? Branch::Plus : Branch::Minus;
}

}  // namespace

PointRep eval_g(const MapRealization& m, PointRep p, Branch side) {
  const MapParams& P = m.params;
  switch (locate(m, p, side)) {
    case Region::NeutralM: {
      double z = p.anchor == -1 ? p.off : 1.0 + p.x();
      if (z == 0.0) return {-1, 0.0};
      return PointRep::normalized(-1, neutral_step(z, P.ell1, P.Lm1));
    }
    case Region::GlueM:
      return PointRep::from_double(m.glue_m.value(p.x()));
    case Region::PowerM:
      return PointRep::normalized(1, -P.a1 * std::pow(-p.x(), P.k1));
    case Region::PowerP:
      return PointRep::normalized(-1, P.a2 * std::pow(p.x(), P.k2));
    case Region::GlueP:
      return PointRep::from_double(m.glue_p.value(p.x()));
    case Region::NeutralP: {
      double w = p.anchor == 1 ? -p.off : 1.0 - p.x();
      if (w == 0.0) return {1, 0.0};
      return PointRep::normalized(1, -neutral_step(w, P.ell2, P.Lp1));
    }
  }
  fail(ErrCode::Internal, "unreachable region");
}

PointRep eval_g(const MapRealization& m, PointRep p) {
  return eval_g(m, p, default_side(p));
}

double eval_g_prime(const MapRealization& m, PointRep p, Branch side) {
  const MapParams& P = m.params;
  switch (locate(m, p, side)) {
    case Region::NeutralM: {
      double z = p.anchor == -1 ? p.off : 1.0 + p.x();
      if (z == 0.0) return 1.0;
      return neutral_step_d2(z, P.ell1, P.Lm1).d1;
    }
    case Region::GlueM:
      return m.glue_m.deriv(p.x());
    case Region::PowerM:
      return power_deriv(P.a1, P.k1, -p.x());
    case Region::PowerP:
      return power_deriv(P.a2, P.k2, p.x());
    case Region::GlueP:
      return m.glue_p.deriv(p.x());
    case Region::NeutralP: {
      double w = p.anchor == 1 ? -p.off : 1.0 - p.x();
      if (w == 0.0) return 1.0;
      return neutral_step_d2(w, P.ell2, P.Lp1).d1;
    }
  }
  fail(ErrCode::Internal, "unreachable region");
}

double eval_g_prime(const MapRealization& m, PointRep p) {
  return eval_g_prime(m, p, default_side(p));
}

double eval_g_second(const MapRealization& m, PointRep p, Branch side) {
  const MapParams& P = m.params;
  switch (locate(m, p, side)) {
    case Region::NeutralM: {
      double z = p.anchor == -1 ? p.off : 1.0 + p.x();
      if (z == 0.0) {
        if (P.ell1 < 1.0) return std::numeric_limits<double>::infinity();
        if (P.ell1 > 1.0) return 0.0;
        z = 1e-300;  // limit of 2 L(z) as z -> 0 for the boundary exponent
      }
      return neutral_step_d2(z, P.ell1, P.Lm1).d2;
    }
    case Region::GlueM:
      return m.glue_m.second(p.x());
    case Region::PowerM:
      return -power_second(P.a1, P.k1, -p.x());
    case Region::PowerP:
      return power_second(P.a2, P.k2, p.x());
    case Region::GlueP:
      return m.glue_p.second(p.x());
    case Region::NeutralP: {
      double w = p.anchor == 1 ? -p.off : 1.0 - p.x();
      if (w == 0.0) {
        if (P.ell2 < 1.0) return -std::numeric_limits<double>::infinity();
        if (P.ell2 > 1.0) return 0.0;
        w = 1e-300;
      }
      return -neutral_step_d2(w, P.ell2, P.Lp1).d2;
    }
  }
  fail(ErrCode::Internal, "unreachable region");
}

double eval_g_second(const MapRealization& m, PointRep p) {
  return eval_g_second(m, p, default_side(p));
}

namespace {

// Solve neutral_step(z) = Y on (0, zmax]. The dispatch guarantees
// Y <= neutral_step(zmax); since the step exceeds identity, Y itself is an
// upper bracket whenever it fits below zmax.
double solve_neutral(double Y, double zmax, double ell, const SvExpr& L) {
  if (Y <= 0.0) return 0.0;
  double hi = std::min(Y, zmax);
  double lo = hi;
  double flo = 1.0;
  for (int i = 0; i < 2000 && flo > 0.0; ++i) {
    lo *= 0.5;
    flo = neutral_step(lo, ell, L) - Y;
  }
  if (flo > 0.0)
    fail(ErrCode::Convergence, "no lower bracket for the neutral preimage");
  auto f = [&](double z) { return neutral_step(z, ell, L) - Y; };
  auto df = [&](double z) { return neutral_step_d2(z, ell, L).d1; };
  return newton_bisect(f, df, lo, hi, 1e-15).x;
}

}  // namespace

PointRep inverse_branch(const MapRealization& m, Branch side, PointRep y) {
  const MapParams& P = m.params;
  if (y.anchor == -1 && y.off < 0.0) fail(ErrCode::Domain, "image below -1");
  if (y.anchor == 1 && y.off > 0.0) fail(ErrCode::Domain, "image above 1");

  if (side == Branch::Minus) {
    double Y = (y.anchor == -1) ? y.off : 1.0 + y.x();
    if (Y <= 0.0) return {-1, 0.0};
    double phiA = neutral_step(m.zA, P.ell1, P.Lm1);
    if (Y < phiA) return {-1, solve_neutral(Y, m.zA, P.ell1, P.Lm1)};
    double yx = y.x();
    if (yx <= m.Bp) {  // g(Bm) = 1 - wA = Bp
      // roundoff guards: the polynomial hits the shared boundary values only
      // to machine precision
      if (m.glue_m.value(m.Am) - yx >= 0.0) return PointRep::from_double(m.Am);
      if (m.glue_m.value(m.Bm) - yx <= 0.0) return PointRep::from_double(m.Bm);
      auto f = [&](double x) { return m.glue_m.value(x) - yx; };
      auto df = [&](double x) { return m.glue_m.deriv(x); };
      return PointRep::from_double(newton_bisect(f, df, m.Am, m.Bm, 1e-15).x);
    }
    double W = (y.anchor == 1) ? -y.off : 1.0 - yx;
    return {0, -std::pow(W / P.a1, 1.0 / P.k1)};
  }

  double Yz = (y.anchor == -1) ? y.off : 1.0 + y.x();
  if (Yz <= 0.0) return {0, 0.0};
  if (Yz < m.zA) return {0, std::pow(Yz / P.a2, 1.0 / P.k2)};
  double psiB = neutral_step(m.wA, P.ell2, P.Lp1);
  double yx = y.x();
  if (yx <= 1.0 - psiB) {
    if (m.glue_p.value(m.Ap) - yx >= 0.0) return PointRep::from_double(m.Ap);
    if (m.glue_p.value(m.Bp) - yx <= 0.0) return PointRep::from_double(m.Bp);
    auto f = [&](double x) { return m.glue_p.value(x) - yx; };
    auto df = [&](double x) { return m.glue_p.deriv(x); };
    return PointRep::from_double(newton_bisect(f, df, m.Ap, m.Bp, 1e-15).x);
  }
  double W = (y.anchor == 1) ? -y.off : 1.0 - yx;
  if (W <= 0.0) return {1, 0.0};
  return {1, -solve_neutral(W, m.wA, P.ell2, P.Lp1)};
}

namespace {

void check_monotone(const MapRealization& m) {
  auto require_pos = [](double d, const char* where) {
    if (!(d > 0.0))
      fail(ErrCode::GlueNotMonotone,
           std::string("derivative not positive in the ") + where + " region");
  };
  const int nz = 2500;
  for (int i = 0; i <= nz; ++i) {
    double t = double(i) / nz;
    double z = m.zA * std::pow(1e-12, 1.0 - t);
    require_pos(eval_g_prime(m, {-1, z * (1.0 - 1e-13)}, Branch::Minus),
                "left neutral");
    double w = m.wA * std::pow(1e-12, 1.0 - t);
    require_pos(eval_g_prime(m, {1, -w * (1.0 - 1e-13)}, Branch::Plus),
                "right neutral");
  }
  // power windows are monotone by construction; the glue was checked during
  // its solve, re-verify at the joints
  for (double x : {m.Am, m.Bm}) require_pos(m.glue_m.deriv(x), "left glue");
  for (double x : {m.Ap, m.Bp}) require_pos(m.glue_p.deriv(x), "right glue");

  const int nx = 10000;
  double prev_m = -1.0, prev_p = -1.0;
  bool have_prev = false;
  for (int i = 1; i < nx; ++i) {
    double xm = -1.0 + double(i) / nx;
    double xp = double(i) / nx;
    double gm = eval_g(m, PointRep::from_double(xm), Branch::Minus).x();
    double gp = eval_g(m, PointRep::from_double(xp), Branch::Plus).x();
    if (have_prev && (gm <= prev_m || gp <= prev_p))
      fail(ErrCode::GlueNotMonotone, "sampled map values fail to increase");
    prev_m = gm;
    prev_p = gp;
    have_prev = true;
  }
}

// Lower-bound witness for the excess derivative over the image of the power
// window: ratio of g'(-1+z)-1 to z^ell L(z), sampled down to tiny offsets.
double slow_var_eps(double ell, const SvExpr& L, double zmax,
                    const char* side) {
  const int n = 1000;
  double inf = 1e300;
  for (int i = 0; i < n; ++i) {
    double t = double(i) / (n - 1);
    double z = zmax * (1.0 - 1e-9) * std::pow(1e-10, t);
    D2 st = neutral_step_d2(z, ell, L);
    double denom = std::pow(z, ell) * sv_eval(L, z);
    double ratio = (st.d1 - 1.0) / denom;
    inf = std::min(inf, ratio);
  }
  if (!(inf > 0.0))
    fail(ErrCode::SlowVarConditionFails,
         std::string("excess derivative not bounded below on the ") + side +
             " side; shrink iota");
  return 0.9 * inf;
}

struct Ladder {
  std::vector<PointRep> x;  // x[i] is the i-th preimage of 0 along one branch
  int m_star = 0;           // first index with offset inside the power window
};

Ladder preimage_ladder(const MapRealization& m, Branch side) {
  Ladder lad;
  lad.x.push_back(inverse_branch(m, side, PointRep{0, 0.0}));
  auto inside = [&](PointRep p) {
    return side == Branch::Minus ? (p.anchor == -1 && p.off < m.zA)
                                 : (p.anchor == 1 && -p.off < m.wA);
  };
  while (!inside(lad.x.back())) {
    lad.x.push_back(inverse_branch(m, side, lad.x.back()));
    if (lad.x.size() > 200000)
      fail(ErrCode::Internal, "preimage ladder did not reach the power window");
  }
  lad.m_star = int(lad.x.size()) - 1;
  // one extra rung: the deepest return cell needs both endpoints
  lad.x.push_back(inverse_branch(m, side, lad.x.back()));
  return lad;
}

// Return cells against the opposite branch: cell n on one side is the
// pullback of the (n-1)-deep cell of the other side's partition toward its
// fixed point, so n forward steps take it across to the other half and back
// to the base interval. The cutoff count is the first n whose cell sits
// inside the pure power window; every orbit from a shallower cell passes
// through glue, where expansion has to be checked rather than derived.
void check_expansion(MapRealization& m) {
  Ladder minus = preimage_ladder(m, Branch::Minus);
  Ladder plus = preimage_ladder(m, Branch::Plus);
  m.n_plus = minus.m_star + 2;  // plus-side cells pull back the minus ladder
  m.n_minus = plus.m_star + 2;

  double lambda = 1e300;
  auto scan = [&](const Ladder& lad, Branch cell_side, int nmax,
                  double window_edge) {
    Branch far_side = cell_side == Branch::Plus ? Branch::Minus : Branch::Plus;
    std::vector<PointRep> y;
    y.push_back(inverse_branch(m, cell_side, PointRep{0, 0.0}));
    for (int n = 1; n <= nmax; ++n)
      y.push_back(inverse_branch(m, cell_side, lad.x[size_t(n - 1)]));
    // the deepest cell must sit inside the power window, the previous not
    if (std::fabs(y[size_t(nmax - 1)].x()) > std::fabs(window_edge) + 1e-12 ||
        std::fabs(y[size_t(nmax - 2)].x()) < std::fabs(window_edge) - 1e-12)
      fail(ErrCode::Internal, "return cell indexing lost the window cutoff");
    for (int n = 1; n <= nmax; ++n) {
      double e0 = y[size_t(n)].x(), e1 = y[size_t(n - 1)].x();
      double lo = std::min(e0, e1), hi = std::max(e0, e1);
      for (int s = 0; s < 1000; ++s) {
        PointRep p = PointRep::from_double(lo + (hi - lo) * (s + 0.5) / 1000);
        double prod = 1.0;
        for (int j = 0; j < n; ++j) {
          prod *= eval_g_prime(m, p, j == 0 ? cell_side : far_side);
          p = eval_g(m, p, j == 0 ? cell_side : far_side);
        }
        lambda = std::min(lambda, prod);
      }
    }
  };
  scan(minus, Branch::Plus, m.n_plus, m.params.iota);
  scan(plus, Branch::Minus, m.n_minus, -m.params.iota);
  m.lambda_attained = lambda;
  if (!(lambda > 1.0))
    fail(ErrCode::ExpansionFails,
         "n-step derivative over the return cells attains " +
             std::to_string(lambda) + " <= 1");
}

}  // namespace

MapRealization build_map(MapParams params) {
  validate_params(params);
  MapRealization m;
  m.params = std::move(params);
  const MapParams& P = m.params;

  m.zA = P.a2 * std::pow(P.iota, P.k2);
  m.wA = P.a1 * std::pow(P.iota, P.k1);
  m.Am = -1.0 + m.zA;
  m.Bm = -P.iota;
  m.Ap = P.iota;
  m.Bp = 1.0 - m.wA;
  m.beta1 = P.k2 * P.ell1;
  m.beta2 = P.k1 * P.ell2;
  m.beta = std::max(m.beta1, m.beta2);
  m.second_deriv_unbounded_m1 = P.ell1 <= 1.0;
  m.second_deriv_unbounded_p1 = P.ell2 <= 1.0;

  {
    D2 fA = neutral_step_d2(m.zA, P.ell1, P.Lm1);
    double YA = -1.0 + fA.v;
    double YB = m.Bp;  // 1 - a1 iota^k1
    double DB = power_deriv(P.a1, P.k1, P.iota);
    double SB = -power_second(P.a1, P.k1, P.iota);
    m.glue_m = solve_glue(m.Am, m.Bm, YA, YB, fA.d1, fA.d2, DB, SB, P.glue,
                          "minus");
  }
  {
    double YA = m.Am;  // -1 + a2 iota^k2
    double DA = power_deriv(P.a2, P.k2, P.iota);
    double SA = power_second(P.a2, P.k2, P.iota);
    D2 fB = neutral_step_d2(m.wA, P.ell2, P.Lp1);
    double YB = 1.0 - fB.v;
    m.glue_p = solve_glue(m.Ap, m.Bp, YA, YB, DA, SA, fB.d1, -fB.d2, P.glue,
                          "plus");
  }

  check_monotone(m);
  m.params.eps1 = slow_var_eps(P.ell1, P.Lm1, m.zA, "minus");
  m.params.eps2 = slow_var_eps(P.ell2, P.Lp1, m.wA, "plus");
  check_expansion(m);
  return m;
}

MapParams map_params_from_json(const nlohmann::json& j) {
  if (!j.is_object())
    fail(ErrCode::Config, "map parameters must be a JSON object");
  MapParams p;
  auto num = [&](const char* key) -> double {
    if (!j.contains(key) || !j.at(key).is_number())
      fail(ErrCode::Config,
           std::string("map parameters need a numeric '") + key + "'");
    return j.at(key).get<double>();
  };
  p.ell1 = num("ell1");
  p.ell2 = num("ell2");
  p.k1 = num("k1");
  p.k2 = num("k2");
  p.a1 = num("a1");
  p.a2 = num("a2");
  p.iota = num("iota");
  if (!j.contains("Lm1") || !j.contains("Lp1"))
    fail(ErrCode::Config, "map parameters need 'Lm1' and 'Lp1' expressions");
  p.Lm1 = sv_from_json(j.at("Lm1"));
  p.Lp1 = sv_from_json(j.at("Lp1"));
  if (j.contains("glue")) {
    const auto& g = j.at("glue");
    if (!g.is_object()) fail(ErrCode::Config, "'glue' must be an object");
    if (g.contains("skew_scale")) {
      if (!g.at("skew_scale").is_number())
        fail(ErrCode::Config, "glue.skew_scale must be numeric");
      p.glue.skew_scale = g.at("skew_scale").get<double>();
    }
    if (g.contains("max_retries")) {
      if (!g.at("max_retries").is_number_integer())
        fail(ErrCode::Config, "glue.max_retries must be an integer");
      p.glue.max_retries = g.at("max_retries").get<int>();
    }
  }
  validate_params(p);
  return p;
}

nlohmann::json map_params_to_json(const MapParams& p) {
  return nlohmann::json{
      {"ell1", p.ell1},
      {"ell2", p.ell2},
      {"k1", p.k1},
      {"k2", p.k2},
      {"a1", p.a1},
      {"a2", p.a2},
      {"iota", p.iota},
      {"Lm1", sv_to_json(p.Lm1)},
      {"Lp1", sv_to_json(p.Lp1)},
      {"glue",
       {{"skew_scale", p.glue.skew_scale},
        {"max_retries", p.glue.max_retries}}},
  };
}

}  // namespace ndyn
