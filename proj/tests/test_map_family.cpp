#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "json.hpp"
#include "ndyn/errors.hpp"
#include "ndyn/map_family.hpp"
#include "ndyn/rng.hpp"

using ndyn::Branch;
using ndyn::ErrCode;
using ndyn::MapParams;
using ndyn::MapRealization;
using ndyn::PointRep;
using ndyn::SvNode;
using ndyn::SvVariant;

namespace {

template <typename F>
ErrCode thrown_code(F&& f) {
  try {
    std::forward<F>(f)();
  } catch (const ndyn::Error& e) {
    return e.code();
  }
  return ErrCode::Ok;
}

MapParams constant_params(double ell, double k, double a, double iota) {
  MapParams p;
  p.ell1 = p.ell2 = ell;
  p.k1 = p.k2 = k;
  p.a1 = p.a2 = a;
  p.iota = iota;
  return p;  // Lm1, Lp1 default to the constant 1
}

MapParams logpow_params(double p_exp) {
  MapParams p = constant_params(1.0, 1.0, 1.0, 0.15);
  p.Lm1 = {SvVariant::AtZero, SvNode::logpow(1, p_exp)};
  p.Lp1 = {SvVariant::AtZero, SvNode::logpow(1, p_exp)};
  return p;
}

}  // namespace

TEST_CASE("build accepts the shipped parameter shapes") {
  // singular-derivative case k < 1
  MapRealization m0 = ndyn::build_map(constant_params(1.0, 0.75, 1.0, 0.25));
  CHECK(m0.beta1 == doctest::Approx(0.75));
  CHECK(m0.beta == doctest::Approx(0.75));
  CHECK(m0.lambda_attained > 1.0);
  CHECK(m0.n_minus >= 2);
  CHECK(m0.n_plus >= 2);

  // critical case k > 1
  MapRealization mi = ndyn::build_map(constant_params(0.5, 1.5, 1.0, 0.25));
  CHECK(mi.beta1 == doctest::Approx(0.75));
  CHECK(mi.second_deriv_unbounded_m1);

  // constant slow variation: the excess-derivative witness exists untouched
  CHECK(m0.params.eps1 > 0.0);
  CHECK(m0.params.eps2 > 0.0);

  MapRealization ml = ndyn::build_map(logpow_params(0.5));
  CHECK(ml.params.eps1 > 0.0);

  // heavy tail side: no unbounded second derivative
  MapRealization mh = ndyn::build_map(constant_params(1.5, 1.0, 1.0, 0.25));
  CHECK_FALSE(mh.second_deriv_unbounded_m1);
  CHECK(mh.beta == doctest::Approx(1.5));
}

TEST_CASE("parameter validation rejects malformed input") {
  CHECK(thrown_code([] {
          ndyn::build_map(constant_params(-1.0, 1.0, 1.0, 0.25));
        }) == ErrCode::Config);
  CHECK(thrown_code([] {
          ndyn::build_map(constant_params(1.0, 1.0, 1.0, 0.0));
        }) == ErrCode::Config);
  CHECK(thrown_code([] {
          ndyn::build_map(constant_params(1.0, 1.0, 1.0, 1.0));
        }) == ErrCode::Config);
  // window image reaches back into the window
  CHECK(thrown_code([] {
          ndyn::build_map(constant_params(1.0, 1.0, 3.0, 0.3));
        }) == ErrCode::Config);
  // at-infinity factor is the wrong variant for offsets
  CHECK(thrown_code([] {
          MapParams p = constant_params(1.0, 1.0, 1.0, 0.25);
          p.Lm1 = {SvVariant::AtInfinity, SvNode::konst(1.0)};
          ndyn::build_map(p);
        }) == ErrCode::Config);
  // iota too large for a depth-2 factor's domain
  CHECK(thrown_code([] {
          MapParams p = constant_params(1.0, 1.0, 1.0, 0.25);
          p.Lm1 = {SvVariant::AtZero, SvNode::exppow({{2, 0.5, 1.0}})};
          ndyn::build_map(p);
        }) == ErrCode::Config);
}

TEST_CASE("degenerate window width fails loudly") {
  ErrCode c = thrown_code([] {
    ndyn::build_map(constant_params(1.0, 0.75, 1.0, 1e-6));
  });
  CHECK((c == ErrCode::GlueNotMonotone || c == ErrCode::SlowVarConditionFails));
}

TEST_CASE("evaluation matches the local forms exactly") {
  MapRealization m = ndyn::build_map(constant_params(1.0, 1.0, 1.0, 0.15));

  // fixed points
  PointRep fm = ndyn::eval_g(m, {-1, 0.0});
  CHECK(fm.anchor == -1);
  CHECK(fm.off == 0.0);
  PointRep fp = ndyn::eval_g(m, {1, 0.0});
  CHECK(fp.anchor == 1);
  CHECK(fp.off == 0.0);

  // left neutral form: z + z^2 at z = 0.1
  PointRep n = ndyn::eval_g(m, {-1, 0.1});
  CHECK(n.anchor == -1);
  CHECK(n.off == doctest::Approx(0.11).epsilon(1e-15));

  // right power window: offsets map to exact powers
  PointRep q = ndyn::eval_g(m, {0, 0.1});
  CHECK(q.anchor == -1);
  CHECK(q.off == doctest::Approx(0.1).epsilon(1e-15));

  // derivative at the fixed points is exactly one
  CHECK(ndyn::eval_g_prime(m, {-1, 0.0}) == 1.0);
  CHECK(ndyn::eval_g_prime(m, {1, 0.0}) == 1.0);

  MapRealization m2 = ndyn::build_map(constant_params(1.0, 2.0, 1.0, 0.15));
  PointRep w = ndyn::eval_g(m2, {0, -0.01});
  CHECK(w.anchor == 1);
  CHECK(w.off == doctest::Approx(-1e-4).epsilon(1e-15));
  CHECK(w.x() == doctest::Approx(0.9999).epsilon(1e-15));
  CHECK(ndyn::eval_g_prime(m2, {0, -0.1}) == doctest::Approx(0.2).epsilon(1e-14));

  MapRealization m3 = ndyn::build_map(constant_params(1.0, 0.5, 1.0, 0.15));
  double big = ndyn::eval_g_prime(m3, {0, -1e-10});
  CHECK(std::isfinite(big));
  CHECK(big > 100.0);

  // sided evaluation rejects points off the branch
  CHECK(thrown_code([&] { ndyn::eval_g(m, {1, 0.0}, Branch::Minus); }) ==
        ErrCode::Domain);
  CHECK(thrown_code([&] { ndyn::eval_g(m, {-1, 0.1}, Branch::Plus); }) ==
        ErrCode::Domain);
}

TEST_CASE("sign structure near the fixed points") {
  MapRealization m = ndyn::build_map(constant_params(0.5, 1.5, 1.0, 0.25));
  for (int i = 1; i <= 50; ++i) {
    double z = m.zA * i / 51.0;
    CHECK(ndyn::eval_g(m, {-1, z}).x() > -1.0 + z);  // g(x) > x near -1
    double w = m.wA * i / 51.0;
    CHECK(ndyn::eval_g(m, {1, -w}).x() < 1.0 - w);  // g(x) < x near +1
  }
}

TEST_CASE("map is strictly increasing on both branches") {
  MapRealization m = ndyn::build_map(constant_params(1.0, 0.75, 1.0, 0.25));
  double prev = -2.0;
  for (int i = 1; i < 1000; ++i) {
    double x = -1.0 + double(i) / 1000;
    double v = ndyn::eval_g(m, PointRep::from_double(x), Branch::Minus).x();
    CHECK(v > prev);
    CHECK(ndyn::eval_g_prime(m, PointRep::from_double(x), Branch::Minus) > 0.0);
    prev = v;
  }
  prev = -2.0;
  for (int i = 1; i < 1000; ++i) {
    double x = double(i) / 1000;
    double v = ndyn::eval_g(m, PointRep::from_double(x), Branch::Plus).x();
    CHECK(v > prev);
    CHECK(ndyn::eval_g_prime(m, PointRep::from_double(x), Branch::Plus) > 0.0);
    prev = v;
  }
}

TEST_CASE("glue joints are C2 to construction precision") {
  for (MapParams params :
       {constant_params(1.0, 0.75, 1.0, 0.25),
        constant_params(0.5, 1.5, 1.0, 0.25), logpow_params(1.5)}) {
    MapRealization m = ndyn::build_map(params);

    // minus joint at the neutral end
    ndyn::D2 fA = ndyn::neutral_step_d2(m.zA, params.ell1, params.Lm1);
    CHECK(m.glue_m.value(m.Am) == doctest::Approx(-1.0 + fA.v).epsilon(1e-10));
    CHECK(m.glue_m.deriv(m.Am) == doctest::Approx(fA.d1).epsilon(1e-10));
    CHECK(m.glue_m.second(m.Am) == doctest::Approx(fA.d2).epsilon(1e-9));

    // minus joint at the power end
    double D = params.a1 * params.k1 * std::pow(params.iota, params.k1 - 1.0);
    double S = -params.a1 * params.k1 * (params.k1 - 1.0) *
               std::pow(params.iota, params.k1 - 2.0);
    CHECK(m.glue_m.value(m.Bm) == doctest::Approx(m.Bp).epsilon(1e-12));
    CHECK(m.glue_m.deriv(m.Bm) == doctest::Approx(D).epsilon(1e-10));
    CHECK(m.glue_m.second(m.Bm) == doctest::Approx(S).epsilon(1e-9));

    // plus joint at the power end
    double D2p = params.a2 * params.k2 * std::pow(params.iota, params.k2 - 1.0);
    double S2p = params.a2 * params.k2 * (params.k2 - 1.0) *
                 std::pow(params.iota, params.k2 - 2.0);
    CHECK(m.glue_p.value(m.Ap) == doctest::Approx(m.Am).epsilon(1e-12));
    CHECK(m.glue_p.deriv(m.Ap) == doctest::Approx(D2p).epsilon(1e-10));
    CHECK(m.glue_p.second(m.Ap) == doctest::Approx(S2p).epsilon(1e-9));

    // plus joint at the neutral end
    ndyn::D2 fB = ndyn::neutral_step_d2(m.wA, params.ell2, params.Lp1);
    CHECK(m.glue_p.value(m.Bp) == doctest::Approx(1.0 - fB.v).epsilon(1e-10));
    CHECK(m.glue_p.deriv(m.Bp) == doctest::Approx(fB.d1).epsilon(1e-10));
    CHECK(m.glue_p.second(m.Bp) == doctest::Approx(-fB.d2).epsilon(1e-9));

    // one-sided finite differences of g' agree across each joint
    const double h = 1e-8;
    for (double x0 : {m.Am, m.Bm, m.Ap, m.Bp}) {
      Branch side = x0 < 0.0 ? Branch::Minus : Branch::Plus;
      auto gp = [&](double x) {
        return ndyn::eval_g_prime(m, PointRep::from_double(x), side);
      };
      double fdL = (gp(x0) - gp(x0 - h)) / h;
      double fdR = (gp(x0 + h) - gp(x0)) / h;
      CHECK(fdL == doctest::Approx(fdR).epsilon(1e-4));
    }
  }
}

TEST_CASE("preimages invert the map to full precision") {
  MapRealization m = ndyn::build_map(constant_params(0.5, 1.5, 1.0, 0.25));

  // closed-form window preimage
  double y_off = std::pow(0.1, 1.5);
  PointRep x = ndyn::inverse_branch(m, Branch::Plus, {-1, y_off});
  CHECK(x.anchor == 0);
  CHECK(x.off == doctest::Approx(0.1).epsilon(1e-14));

  // round trips on both sides, interior points
  ndyn::CounterRng rng(2024, 7);
  for (int i = 0; i < 1000; ++i) {
    double xm = -1.0 + 0.999998 * rng.next_double() + 1e-6;
    PointRep p = PointRep::from_double(xm);
    PointRep y = ndyn::eval_g(m, p, Branch::Minus);
    PointRep back = ndyn::inverse_branch(m, Branch::Minus, y);
    CHECK(back.x() == doctest::Approx(p.x()).epsilon(1e-12));

    double xp = 0.999998 * rng.next_double() + 1e-6;
    PointRep q = PointRep::from_double(xp);
    PointRep yq = ndyn::eval_g(m, q, Branch::Plus);
    PointRep bq = ndyn::inverse_branch(m, Branch::Plus, yq);
    CHECK(bq.x() == doctest::Approx(q.x()).epsilon(1e-12));
  }

  // deep near-fixed-point offsets survive the round trip in offset space
  for (double z : {1e-6, 1e-9, 1e-12}) {
    PointRep y = ndyn::eval_g(m, {-1, z});
    PointRep back = ndyn::inverse_branch(m, Branch::Minus, y);
    CHECK(back.anchor == -1);
    CHECK(back.off == doctest::Approx(z).epsilon(1e-12));
    PointRep yp = ndyn::eval_g(m, {1, -z});
    PointRep bp = ndyn::inverse_branch(m, Branch::Plus, yp);
    CHECK(bp.anchor == 1);
    CHECK(bp.off == doctest::Approx(-z).epsilon(1e-12));
  }

  // left endpoint of the base return interval, against a bisection oracle
  PointRep x0 = ndyn::inverse_branch(m, Branch::Minus, {0, 0.0});
  double lo = -1.0 + 1e-9, hi = -1e-9;
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    if (ndyn::eval_g(m, PointRep::from_double(mid), Branch::Minus).x() < 0.0)
      lo = mid;
    else
      hi = mid;
  }
  CHECK(x0.x() == doctest::Approx(0.5 * (lo + hi)).epsilon(1e-10));
  // for this window the endpoint lies in the filled gap
  CHECK(x0.x() > m.Am);
  CHECK(x0.x() < m.Bm);

  CHECK(thrown_code([&] {
          ndyn::inverse_branch(m, Branch::Minus, {-1, -0.5});
        }) == ErrCode::Domain);
}

TEST_CASE("excess derivative ratio approaches its limit") {
  // nonconstant factor: residual decreases strictly
  MapParams p = logpow_params(0.5);
  MapRealization m = ndyn::build_map(p);
  double lim = 1.0 + p.ell1;
  double prev = 1e300;
  for (double z : {1e-2, 1e-4, 1e-6}) {
    ndyn::D2 st = ndyn::neutral_step_d2(z, p.ell1, p.Lm1);
    double ratio = (st.d1 - 1.0) / (std::pow(z, p.ell1) * sv_eval(p.Lm1, z));
    double res = std::fabs(ratio - lim);
    CHECK(res < prev);
    prev = res;
  }

  // constant factor: the ratio is the limit exactly
  MapParams pc = constant_params(0.5, 1.5, 1.0, 0.25);
  for (double z : {1e-2, 1e-4, 1e-6}) {
    ndyn::D2 st = ndyn::neutral_step_d2(z, pc.ell1, pc.Lm1);
    double ratio = (st.d1 - 1.0) / std::pow(z, pc.ell1);
    CHECK(ratio == doctest::Approx(1.0 + pc.ell1).epsilon(1e-12));
  }
}

TEST_CASE("derivatives agree with finite differences off the anchors") {
  MapRealization m = ndyn::build_map(logpow_params(1.5));
  const double h = 1e-7;
  for (double x : {-0.995, -0.9, -0.5, -0.2, -0.05, 0.05, 0.3, 0.7, 0.995}) {
    Branch side = x < 0 ? Branch::Minus : Branch::Plus;
    auto gv = [&](double t) {
      return ndyn::eval_g(m, PointRep::from_double(t), side).x();
    };
    double fd = (gv(x + h) - gv(x - h)) / (2.0 * h);
    double an = ndyn::eval_g_prime(m, PointRep::from_double(x), side);
    CHECK(fd == doctest::Approx(an).epsilon(1e-5));
    auto gp = [&](double t) {
      return ndyn::eval_g_prime(m, PointRep::from_double(t), side);
    };
    double fd2 = (gp(x + h) - gp(x - h)) / (2.0 * h);
    double an2 = ndyn::eval_g_second(m, PointRep::from_double(x), side);
    CHECK(fd2 == doctest::Approx(an2).epsilon(1e-4));
  }
}

TEST_CASE("construction is deterministic") {
  MapRealization a = ndyn::build_map(constant_params(1.0, 0.75, 1.0, 0.25));
  MapRealization b = ndyn::build_map(constant_params(1.0, 0.75, 1.0, 0.25));
  CHECK(a.glue_m.c0 == b.glue_m.c0);
  CHECK(a.glue_m.q4 == b.glue_m.q4);
  CHECK(a.glue_p.gM == b.glue_p.gM);
  CHECK(a.lambda_attained == b.lambda_attained);
  CHECK(a.params.eps1 == b.params.eps1);
}

TEST_CASE("parameters serialize to json and back") {
  MapParams p = logpow_params(1.5);
  p.glue.skew_scale = 1.25;
  p.glue.max_retries = 5;
  nlohmann::json j = ndyn::map_params_to_json(p);
  MapParams q = ndyn::map_params_from_json(j);
  CHECK(q.ell1 == p.ell1);
  CHECK(q.k2 == p.k2);
  CHECK(q.iota == p.iota);
  CHECK(q.glue.skew_scale == 1.25);
  CHECK(q.glue.max_retries == 5);
  CHECK(ndyn::sv_equal(q.Lm1, p.Lm1));
  CHECK(ndyn::sv_equal(q.Lp1, p.Lp1));

  CHECK(thrown_code([] {
          ndyn::map_params_from_json(nlohmann::json::object());
        }) == ErrCode::Config);
  CHECK(thrown_code([&] {
          nlohmann::json bad = ndyn::map_params_to_json(p);
          bad.erase("Lm1");
          ndyn::map_params_from_json(bad);
        }) == ErrCode::Config);
  CHECK(thrown_code([&] {
          nlohmann::json bad = ndyn::map_params_to_json(p);
          bad["iota"] = "wide";
          ndyn::map_params_from_json(bad);
        }) == ErrCode::Config);
  CHECK(thrown_code([&] {
          nlohmann::json bad = ndyn::map_params_to_json(p);
          bad["Lm1"]["variant"] = "infinity";
          ndyn::map_params_from_json(bad);
        }) == ErrCode::Config);
}
