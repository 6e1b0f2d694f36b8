#include "ndyn/induced.hpp"

#include <algorithm>
#include <mutex>
#include <cmath>
#include <limits>

#include "ndyn/csv.hpp"
#include "ndyn/errors.hpp"
#include "ndyn/parallel.hpp"
#include "ndyn/rng.hpp"

namespace ndyn {

const char* verdict_name(MeasureVerdict v) {
  switch (v) {
    case MeasureVerdict::FiniteMeasure: return "finite";
    case MeasureVerdict::InfiniteMeasure: return "infinite";
    default: return "unknown";
  }
}

namespace {

constexpr double kBetaTol = 1e-9;

// Of two slowly varying expressions, the one that asymptotically dominates
// the pointwise maximum. The quotient's exponent normal form is eventually
// monotone, so the leading term decides; a trivial quotient falls back to
// the constant offset.
SvExpr dominant_max(const SvExpr& a, const SvExpr& b) {
  SvExpr ratio = product_expr(a, pow_expr(b, -1.0));
  HForm h = to_hform(ratio);
  if (h.terms.empty()) return h.const_log >= 0 ? a : b;
  return h.terms.front().c > 0 ? a : b;
}

// L(n) = conj(corr)(n^{-1/ell})^{1/k} as an at-infinity expression. The
// conjugate of an at-zero expression is the same tree read at 1/z, so the
// change of variables is a power composition.
SvExpr tail_factor(const SvExpr& corr_at_zero, double ell, double k) {
  SvExpr conj = de_bruijn_conjugate(corr_at_zero);
  SvExpr at_inf{SvVariant::AtInfinity, conj.node};
  return pow_expr(compose_power(at_inf, 1.0 / ell), 1.0 / k);
}

bool branch_tail_converges(double beta_branch, bool have_law,
                           const SvExpr& L, const char* side,
                           double beta1, double beta2) {
  if (beta_branch < 1.0 - kBetaTol) return true;
  if (beta_branch > 1.0 + kBetaTol) return false;
  if (!have_law)
    fail(ErrCode::UnsupportedClassification,
         std::string("tail exponent on the ") + side +
             " side sits on the critical line and its correction has no "
             "conjugate in the grammar (beta1 = " +
             std::to_string(beta1) + ", beta2 = " + std::to_string(beta2) +
             ")");
  return series_converges(1.0 / beta_branch, L) == SeriesVerdict::Converges;
}

}  // namespace

TailProfile classify_measure(const MapParams& p) {
  if (!(p.ell1 > 0) || !(p.ell2 > 0) || !(p.k1 > 0) || !(p.k2 > 0) ||
      !(p.a1 > 0) || !(p.a2 > 0))
    fail(ErrCode::Config, "classification needs positive exponents and "
                          "coefficients");
  validate(p.Lm1);
  validate(p.Lp1);

  TailProfile t;
  t.beta1 = p.k2 * p.ell1;
  t.beta2 = p.k1 * p.ell2;
  t.beta = std::max(t.beta1, t.beta2);

  bool equal = std::fabs(t.beta1 - t.beta2) < kBetaTol;
  if (equal) {
    t.kappa = std::min(p.k1, p.k2);
    t.lambda_exp = std::max(p.ell1, p.ell2);
  } else if (t.beta1 > t.beta2) {
    t.kappa = p.k2;
    t.lambda_exp = p.ell1;
  } else {
    t.kappa = p.k1;
    t.lambda_exp = p.ell2;
  }

  try {
    t.L_minus = tail_factor(p.Lm1, p.ell1, p.k2);
    t.have_minus_law = true;
    t.chi2 = RvExpr{-1.0 / t.beta1, t.L_minus};
  } catch (const Error& e) {
    if (e.code() != ErrCode::UnsupportedConjugate) throw;
  }
  try {
    t.L_plus = tail_factor(p.Lp1, p.ell2, p.k1);
    t.have_plus_law = true;
    t.chi1 = RvExpr{-1.0 / t.beta2, t.L_plus};
  } catch (const Error& e) {
    if (e.code() != ErrCode::UnsupportedConjugate) throw;
  }

  t.chi1_converges = branch_tail_converges(t.beta2, t.have_plus_law, t.L_plus,
                                           "plus", t.beta1, t.beta2);
  t.chi2_converges = branch_tail_converges(t.beta1, t.have_minus_law,
                                           t.L_minus, "minus", t.beta1,
                                           t.beta2);
  t.verdict = (t.chi1_converges && t.chi2_converges)
                  ? MeasureVerdict::FiniteMeasure
                  : MeasureVerdict::InfiniteMeasure;

  if (equal) {
    if (t.have_minus_law && t.have_plus_law) {
      t.L_combined = dominant_max(t.L_minus, t.L_plus);
      t.have_combined = true;
    }
  } else if (t.beta1 > t.beta2) {
    t.L_combined = t.L_minus;
    t.have_combined = t.have_minus_law;
  } else {
    t.L_combined = t.L_plus;
    t.have_combined = t.have_plus_law;
  }
  return t;
}

nlohmann::json tail_profile_to_json(const TailProfile& t) {
  nlohmann::json j{{"beta1", t.beta1},
                   {"beta2", t.beta2},
                   {"beta", t.beta},
                   {"kappa", t.kappa},
                   {"lambda_exp", t.lambda_exp},
                   {"verdict", verdict_name(t.verdict)},
                   {"chi1_converges", t.chi1_converges},
                   {"chi2_converges", t.chi2_converges}};
  if (t.have_plus_law) j["L_plus"] = sv_to_string(t.L_plus);
  if (t.have_minus_law) j["L_minus"] = sv_to_string(t.L_minus);
  if (t.have_combined) j["L_combined"] = sv_to_string(t.L_combined);
  return j;
}

InducedMap build_induced(const MapRealization& m, const PartitionTable& t) {
  InducedMap im;
  im.map = &m;
  im.table = &t;
  size_t M = t.u.size();
  im.gu.resize(M);
  im.gv.resize(M);
  im.gu[0] = t.u[0];
  im.gv[0] = t.v[0];
  for (size_t n = 1; n < M; ++n) {
    im.gu[n] = t.w[n - 1] < m.wA
                   ? t.u[n]
                   : -inverse_branch(m, Branch::Minus,
                                     PointRep::normalized(1, -t.w[n - 1]))
                          .x();
    im.gv[n] = t.z[n - 1] < m.zA
                   ? t.v[n]
                   : inverse_branch(m, Branch::Plus,
                                    PointRep::normalized(-1, t.z[n - 1]))
                         .x();
  }
  return im;
}

namespace {

void require_cell_indices(const InducedMap& im, long i, long j) {
  if (i < 1 || j < 1)
    fail(ErrCode::Config, "cell indices start at 1");
  if (j > im.table->N || i > im.table->N)
    fail(ErrCode::Config,
         "cell index exceeds the partition depth " +
             std::to_string(im.table->N));
}

PointRep lift_tower(const MapRealization& m, Branch side, PointRep y,
                    long steps) {
  for (long s = 0; s < steps; ++s) y = inverse_branch(m, side, y);
  return y;
}

}  // namespace

Cell cell_minus(const InducedMap& im, long i, long j) {
  require_cell_indices(im, i, j);
  const MapRealization& m = *im.map;
  // pull the bounding rungs of the j-th plus cell through i-1 tower steps,
  // then through the minus branch
  PointRep inner = lift_tower(m, Branch::Plus, PointRep{0, im.gv[(size_t)j]},
                              i - 1);
  PointRep outer = lift_tower(m, Branch::Plus,
                              PointRep{0, im.gv[(size_t)j - 1]}, i - 1);
  double hi = -inverse_branch(m, Branch::Minus, inner).x();
  double lo = -inverse_branch(m, Branch::Minus, outer).x();
  if (!(lo > 0.0) || !(hi > lo))
    fail(ErrCode::Internal, "degenerate minus cell at (" + std::to_string(i) +
                                ", " + std::to_string(j) + ")");
  return {lo, hi};
}

Cell cell_plus(const InducedMap& im, long i, long j) {
  require_cell_indices(im, i, j);
  const MapRealization& m = *im.map;
  PointRep inner = lift_tower(m, Branch::Minus, PointRep{0, -im.gu[(size_t)j]},
                              i - 1);
  PointRep outer = lift_tower(m, Branch::Minus,
                              PointRep{0, -im.gu[(size_t)j - 1]}, i - 1);
  double hi = inverse_branch(m, Branch::Plus, inner).x();
  double lo = inverse_branch(m, Branch::Plus, outer).x();
  if (!(lo > 0.0) || !(hi > lo))
    fail(ErrCode::Internal, "degenerate plus cell at (" + std::to_string(i) +
                                ", " + std::to_string(j) + ")");
  return {lo, hi};
}

ReturnResult induced_step(const InducedMap& im, PointRep x, long max_iter) {
  const double u0 = im.gu[0];
  PointRep p = x;
  for (long t = 1; t <= max_iter; ++t) {
    p = eval_g(*im.map, p);
    double xx = p.x();
    if (xx < 0.0 && xx > -u0) return {p, t, false};
  }
  return {p, max_iter, true};
}

long return_time(const InducedMap& im, double x, long max_iter) {
  if (!(x < 0.0) || !(x > -im.gu[0]))
    fail(ErrCode::Domain, "return_time: point is outside the base cell");
  ReturnResult r = induced_step(im, PointRep::from_double(x), max_iter);
  if (r.truncated)
    fail(ErrCode::TruncatedReturn,
         "no return within " + std::to_string(max_iter) + " iterations");
  return r.tau;
}

double check_expansion(const InducedMap& im, long i_max, long j_max,
                       int samples_per_cell) {
  if (i_max < 1 || j_max < 1 || samples_per_cell < 1)
    fail(ErrCode::Config, "expansion scan needs a nonempty cell grid");
  if (j_max > im.table->N || i_max > im.table->N)
    fail(ErrCode::Config, "expansion scan exceeds the partition depth");

  const MapRealization& m = *im.map;
  double min_G = std::numeric_limits<double>::infinity();
  long min_i = 0, min_j = 0;

  for (long j = 1; j <= j_max; ++j) {
    PointRep inner{0, im.gv[(size_t)j]};
    PointRep outer{0, im.gv[(size_t)j - 1]};
    for (long i = 1; i <= i_max; ++i) {
      double hi = -inverse_branch(m, Branch::Minus, inner).x();
      double lo = -inverse_branch(m, Branch::Minus, outer).x();
      long steps = i + j;
      for (int s = 0; s < samples_per_cell; ++s) {
        double d = lo + (s + 0.5) * (hi - lo) / samples_per_cell;
        PointRep p{0, -d};
        double log_deriv = 0.0;
        for (long t = 0; t < steps; ++t) {
          log_deriv += std::log(eval_g_prime(m, p));
          p = eval_g(m, p);
        }
        double G = std::exp(log_deriv);
        if (G < min_G) {
          min_G = G;
          min_i = i;
          min_j = j;
        }
      }
      inner = inverse_branch(m, Branch::Plus, inner);
      outer = inverse_branch(m, Branch::Plus, outer);
    }
  }
  if (!(min_G > 1.0))
    fail(ErrCode::ExpansionFails,
         "return map derivative " + std::to_string(min_G) + " at cell (" +
             std::to_string(min_i) + ", " + std::to_string(min_j) + ")");
  return min_G;
}

DistortionReport check_distortion(const InducedMap& im, Branch side,
                                  const std::vector<long>& depths, int pairs,
                                  uint64_t seed) {
  if (pairs < 1) fail(ErrCode::Config, "distortion check needs pairs >= 1");
  const MapRealization& m = *im.map;
  DistortionReport rep;
  rep.depths = depths;

  for (long n : depths) {
    if (n < 1 || n > im.table->N)
      fail(ErrCode::Config, "distortion depth outside the table");
    double lo, hi;
    if (side == Branch::Minus) {
      lo = im.gu[(size_t)n];
      hi = im.gu[(size_t)n - 1];
    } else {
      lo = im.gv[(size_t)n];
      hi = im.gv[(size_t)n - 1];
    }
    double sign = (side == Branch::Minus) ? -1.0 : 1.0;

    CounterRng rng(seed, (uint64_t)n);
    double worst = 0.0;
    for (int q = 0; q < pairs; ++q) {
      double dx = lo + rng.next_double() * (hi - lo);
      double dy = lo + rng.next_double() * (hi - lo);
      if (dx == dy) continue;

      // orbits of the n-step crossing branch, with the log-derivative of
      // every suffix chain
      auto run = [&](double d, std::vector<double>& suffix) {
        PointRep p{0, sign * d};
        std::vector<double> logs((size_t)n);
        for (long t = 0; t < n; ++t) {
          logs[(size_t)t] = std::log(eval_g_prime(m, p));
          p = eval_g(m, p);
        }
        suffix.assign((size_t)n + 1, 0.0);
        for (long t = n - 1; t >= 0; --t)
          suffix[(size_t)t] = suffix[(size_t)t + 1] + logs[(size_t)t];
        return p;
      };
      std::vector<double> sx, sy;
      PointRep fx = run(dx, sx);
      PointRep fy = run(dy, sy);
      double sep = std::fabs(fx.x() - fy.x());
      if (sep < 1e-300) continue;
      for (long t = 0; t < n; ++t) {
        double ratio = std::fabs(sx[(size_t)t] - sy[(size_t)t]) / sep;
        if (ratio > worst) worst = ratio;
      }
    }
    rep.max_ratio.push_back(worst);
    if (worst > rep.fitted_D) rep.fitted_D = worst;
  }
  return rep;
}

namespace {

// Least squares with nonnegative coefficients against one or two basis
// columns, weighted relative to the observed curve.
struct FitResult {
  double c1 = 0.0, c2 = 0.0, residual = 0.0;
};

FitResult fit_tail(const std::vector<double>& obs,
                   const std::vector<double>& a,
                   const std::vector<double>& b) {
  size_t rows = obs.size();
  auto residual_for = [&](double c1, double c2) {
    double acc = 0.0;
    for (size_t r = 0; r < rows; ++r) {
      double rel = (c1 * a[r] + c2 * b[r]) / obs[r] - 1.0;
      acc += rel * rel;
    }
    return std::sqrt(acc / rows);
  };
  auto solve_single = [&](const std::vector<double>& col) {
    double num = 0.0, den = 0.0;
    for (size_t r = 0; r < rows; ++r) {
      double w = 1.0 / (obs[r] * obs[r]);
      num += w * col[r] * obs[r];
      den += w * col[r] * col[r];
    }
    return den > 0 ? std::max(0.0, num / den) : 0.0;
  };

  double aa = 0, ab = 0, bb = 0, ar = 0, br = 0;
  for (size_t r = 0; r < rows; ++r) {
    double w = 1.0 / (obs[r] * obs[r]);
    aa += w * a[r] * a[r];
    ab += w * a[r] * b[r];
    bb += w * b[r] * b[r];
    ar += w * a[r] * obs[r];
    br += w * b[r] * obs[r];
  }
  double det = aa * bb - ab * ab;
  FitResult best;
  bool have = false;
  if (std::fabs(det) > 1e-30 * aa * bb) {
    double c1 = (ar * bb - br * ab) / det;
    double c2 = (br * aa - ar * ab) / det;
    if (c1 >= 0 && c2 >= 0) {
      best = {c1, c2, residual_for(c1, c2)};
      have = true;
    }
  }
  if (!have) {
    double c1 = solve_single(a);
    double c2 = solve_single(b);
    FitResult only_a{c1, 0.0, residual_for(c1, 0.0)};
    FitResult only_b{0.0, c2, residual_for(0.0, c2)};
    best = only_a.residual <= only_b.residual ? only_a : only_b;
  }
  return best;
}

}  // namespace

TailCurve empirical_tail(const InducedMap& im, const TailProfile& prof,
                         long n_max, int n_orbits, uint64_t seed,
                         long returns_per_orbit, int threads, long burn_in,
                         long max_iter) {
  if (n_max < 1 || n_orbits < 1 || returns_per_orbit < 1 || burn_in < 0)
    fail(ErrCode::Config, "tail estimation needs n_max, orbits and returns "
                          "all positive");
  if (n_max > im.table->N)
    fail(ErrCode::Config, "tail depth exceeds the partition table");
  if (max_iter <= n_max)
    fail(ErrCode::Config, "iteration cap must exceed the tail depth");

  const MapRealization& m = *im.map;
  TailCurve c;
  c.n_max = n_max;

  // Lebesgue route: {tau > n} consists of the full cells past depth n plus,
  // inside each depth-i cell with i <= n, the outward stretch whose crossing
  // overshoots the (n-i)-th plus rung. That stretch runs from the pulled-back
  // rung out to the cell edge gu[i-1].
  std::vector<double> extra((size_t)n_max + 1, 0.0);
  for (long j = 0; j < n_max; ++j) {
    PointRep y{0, im.gv[(size_t)j]};
    for (long i = 1; i + j <= n_max; ++i) {
      double edge = -inverse_branch(m, Branch::Minus, y).x();
      extra[(size_t)(i + j)] += std::max(0.0, im.gu[(size_t)i - 1] - edge);
      if (i + j < n_max) y = inverse_branch(m, Branch::Plus, y);
    }
  }
  c.tail_mass.resize((size_t)n_max + 1);
  for (long n = 0; n <= n_max; ++n)
    c.tail_mass[(size_t)n] = (im.gu[(size_t)n] + extra[(size_t)n]) / im.gu[0];

  // Monte Carlo route: per-orbit keyed streams. Counts merge into the shared
  // histogram under a lock; long addition commutes exactly, so the result is
  // identical for any thread count. The floating tau totals are kept per
  // orbit and reduced in index order for the same reason.
  std::vector<long> hist((size_t)n_max + 2, 0);
  std::vector<long> trunc((size_t)n_orbits, 0);
  std::vector<double> tau_sum((size_t)n_orbits, 0.0);
  std::mutex merge_mx;
  parallel_for((int64_t)n_orbits, threads, [&](int64_t b, int64_t e) {
    std::vector<long> local((size_t)n_max + 2, 0);
    for (int64_t orbit = b; orbit < e; ++orbit) {
      CounterRng rng(seed, (uint64_t)orbit);
      double u0 = im.gu[0];
      PointRep p{0, -u0 * std::max(rng.next_double(), 1e-12)};
      for (long k = 0; k < burn_in + returns_per_orbit; ++k) {
        ReturnResult r = induced_step(im, p, max_iter);
        if (r.truncated) {
          ++trunc[(size_t)orbit];
          p = PointRep{0, -u0 * std::max(rng.next_double(), 1e-12)};
          if (k >= burn_in) {
            ++local[(size_t)n_max + 1];  // the capped return exceeds n_max
            tau_sum[(size_t)orbit] += (double)r.tau;
          }
          continue;
        }
        p = r.x;
        if (k >= burn_in) {
          long slot = std::min(r.tau, n_max + 1);
          ++local[(size_t)slot];
          tau_sum[(size_t)orbit] += (double)r.tau;
        }
      }
    }
    std::lock_guard<std::mutex> lk(merge_mx);
    for (size_t s = 0; s < hist.size(); ++s) hist[s] += local[s];
  });

  double tau_total = 0.0;
  for (int o = 0; o < n_orbits; ++o) {
    c.truncated += trunc[(size_t)o];
    tau_total += tau_sum[(size_t)o];
  }
  c.recorded = (long)n_orbits * returns_per_orbit;
  c.mean_tau = tau_total / (double)c.recorded;

  c.tail_mc.assign((size_t)n_max + 1, 0.0);
  long acc = hist[(size_t)n_max + 1];
  for (long n = n_max; n >= 0; --n) {
    c.tail_mc[(size_t)n] = (double)acc / (double)c.recorded;
    acc += hist[(size_t)n];
  }

  // Fit the measured tail against the predicted laws on a trailing window.
  // Under a finite verdict the orbit histogram estimates the invariant tail;
  // otherwise the orbit is not stationary and the Lebesgue curve is the
  // meaningful target. Bins below the Monte Carlo resolution are dropped.
  if (prof.have_minus_law || prof.have_plus_law) {
    bool use_mc = prof.verdict == MeasureVerdict::FiniteMeasure;
    long w_lo = std::max<long>(10, n_max / 100);
    if (prof.have_plus_law)
      w_lo = std::max(w_lo, (long)std::ceil(domain_cutoff(prof.chi1.sv)));
    if (prof.have_minus_law)
      w_lo = std::max(w_lo, (long)std::ceil(domain_cutoff(prof.chi2.sv)));
    std::vector<double> obs, col1, col2;
    for (long n = w_lo; n <= n_max; ++n) {
      double o = use_mc ? c.tail_mc[(size_t)n] : c.tail_mass[(size_t)n];
      if (use_mc && o * (double)c.recorded < 10.0) break;
      if (!(o > 0.0)) break;
      obs.push_back(o);
      col1.push_back(prof.have_plus_law ? rv_eval(prof.chi1, (double)n) : 0.0);
      col2.push_back(prof.have_minus_law ? rv_eval(prof.chi2, (double)n)
                                         : 0.0);
    }
    if (obs.size() >= 8) {
      FitResult f = fit_tail(obs, col1, col2);
      c.C1 = f.c1;
      c.C2 = f.c2;
      c.fit_residual = f.residual;
      c.have_fit = true;
    }
  }
  return c;
}

void tail_write_csv(const TailCurve& c, const TailProfile& prof,
                    const std::string& path) {
  CsvWriter out(path,
                {"n", "tail_mc", "tail_mass", "chi1", "chi2", "fitted"});
  double nan = std::numeric_limits<double>::quiet_NaN();
  double cut1 = prof.have_plus_law ? domain_cutoff(prof.chi1.sv) : 0.0;
  double cut2 = prof.have_minus_law ? domain_cutoff(prof.chi2.sv) : 0.0;
  for (long n = 0; n <= c.n_max; ++n) {
    double x1 = (prof.have_plus_law && (double)n >= cut1)
                    ? rv_eval(prof.chi1, (double)n)
                    : nan;
    double x2 = (prof.have_minus_law && (double)n >= cut2)
                    ? rv_eval(prof.chi2, (double)n)
                    : nan;
    double fitted = nan;
    if (c.have_fit) {
      double a = prof.have_plus_law ? x1 : 0.0;
      double b = prof.have_minus_law ? x2 : 0.0;
      if (!std::isnan(a) && !std::isnan(b)) fitted = c.C1 * a + c.C2 * b;
    }
    out.row_prefixed(n, {c.tail_mc[(size_t)n], c.tail_mass[(size_t)n], x1, x2,
                         fitted});
  }
}

void cells_write_csv(const InducedMap& im, long i_max, long j_max,
                     const std::string& path) {
  CsvWriter out(path, {"i", "j", "lo", "hi", "len", "tau"});
  for (long i = 1; i <= i_max; ++i)
    for (long j = 1; j <= j_max; ++j) {
      Cell cl = cell_minus(im, i, j);
      out.row_prefixed(i, {(double)j, cl.lo, cl.hi, cl.hi - cl.lo,
                           (double)(i + j)});
    }
}

nlohmann::json tail_curve_to_json(const TailCurve& c) {
  nlohmann::json j{{"n_max", c.n_max},
                   {"recorded", c.recorded},
                   {"truncated", c.truncated},
                   {"mean_tau", c.mean_tau}};
  if (c.have_fit) {
    j["C1"] = c.C1;
    j["C2"] = c.C2;
    j["fit_residual"] = c.fit_residual;
  }
  return j;
}

Tower build_tower(const InducedMap& im, const TailCurve& tail,
                  const TailProfile& prof, long l_max) {
  (void)im;
  if (l_max < 0 || l_max > tail.n_max)
    fail(ErrCode::Config, "tower height exceeds the measured tail");
  Tower tw;
  tw.l_max = l_max;
  tw.level_mass.assign((size_t)l_max + 1, 0.0);
  for (long l = 0; l <= l_max; ++l) {
    tw.level_mass[(size_t)l] = tail.tail_mc[(size_t)l];
    tw.total_mass += tw.level_mass[(size_t)l];
  }
  tw.verdict = prof.verdict;
  tw.infinite_mass_warning = prof.verdict == MeasureVerdict::InfiniteMeasure;
  return tw;
}

double tower_mass_R_gt(const Tower& tw, long n) {
  if (n < 0) n = 0;
  double acc = 0.0;
  for (long l = n; l <= tw.l_max; ++l) acc += tw.level_mass[(size_t)l];
  return acc;
}

TowerPoint tower_step(const InducedMap& im, TowerPoint p, long max_iter) {
  ReturnResult r = induced_step(im, p.x, max_iter);
  if (r.truncated)
    fail(ErrCode::TruncatedReturn,
         "tower step: no return within " + std::to_string(max_iter) +
             " iterations");
  if (p.level < r.tau - 1) return {p.x, p.level + 1};
  return {r.x, 0};
}

}  // namespace ndyn
