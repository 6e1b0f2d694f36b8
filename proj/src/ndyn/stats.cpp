#include "ndyn/stats.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <numbers>
#include <numeric>

#include <unsupported/Eigen/FFT>

#include "ndyn/csv.hpp"
#include "ndyn/errors.hpp"
#include "ndyn/parallel.hpp"
#include "ndyn/quadrature.hpp"
#include "ndyn/rng.hpp"

namespace ndyn {

namespace {

double edge_gap(const PointRep& a, const PointRep& b) {
  if (a.anchor == b.anchor) return b.off - a.off;
  return b.x() - a.x();
}

double safe_log_gprime(const MapRealization& m, PointRep p) {
  return std::log(std::max(eval_g_prime(m, p), 1e-300));
}

}  // namespace

DensityEstimate ulam_density(const MapRealization& m, const PartitionTable& t,
                             const InducedMap& im, const TailProfile& prof,
                             long cell_budget, int threads, long max_sweeps,
                             long ladder_depth) {
  if (cell_budget < 1000)
    fail(ErrCode::Config, "density grid needs a cell budget of at least 1000");
  if (threads < 1 || max_sweeps < 1)
    fail(ErrCode::Config, "density estimation needs positive threads and "
                          "sweep cap");
  if (prof.verdict != MeasureVerdict::FiniteMeasure)
    fail(ErrCode::VerdictGate,
         "normalized density needs a finite measure verdict");

  long D = ladder_depth < 0 ? cell_budget / 8 : ladder_depth;
  D = std::min<long>(t.N, D);
  if (D < 1 || 4 * D > 2 * cell_budget)
    fail(ErrCode::Config, "ladder depth out of range for the cell budget");

  // ladder edges toward the fixed points and toward zero. Past the tabled
  // rungs the grid keeps shrinking geometrically down to a fixed offset
  // floor: a single blunt remainder cell would recycle deep mass far too
  // fast and misplace a few percent of it.
  const double geo = 1.12, floor_off = 1e-13;
  auto geo_steps = [&](double from) {
    long j = 0;
    for (double s = from; s > floor_off; s /= geo) ++j;
    return j;
  };
  std::vector<PointRep> coarse;
  coarse.reserve((size_t)(4 * D + 4 * geo_steps(1e-4) + 16));
  coarse.push_back({-1, 0.0});
  {
    long J = geo_steps(t.z[(size_t)D]);
    for (long j = J - 1; j >= 1; --j)
      coarse.push_back({-1, t.z[(size_t)D] * std::pow(geo, -(double)j)});
  }
  for (long n = D; n >= 1; --n) coarse.push_back({-1, t.z[(size_t)n]});
  coarse.push_back({0, -im.gu[0]});
  for (long n = 1; n <= D; ++n) coarse.push_back({0, -im.gu[(size_t)n]});
  {
    long J = geo_steps(im.gu[(size_t)D]);
    for (long j = 1; j < J; ++j)
      coarse.push_back({0, -im.gu[(size_t)D] * std::pow(geo, -(double)j)});
  }
  coarse.push_back({0, 0.0});
  {
    long J = geo_steps(im.gv[(size_t)D]);
    for (long j = J - 1; j >= 1; --j)
      coarse.push_back({0, im.gv[(size_t)D] * std::pow(geo, -(double)j)});
  }
  for (long n = D; n >= 1; --n) coarse.push_back({0, im.gv[(size_t)n]});
  coarse.push_back({0, im.gv[0]});
  for (long n = 1; n <= D; ++n) coarse.push_back({1, -t.w[(size_t)n]});
  {
    long J = geo_steps(t.w[(size_t)D]);
    for (long j = 1; j < J; ++j)
      coarse.push_back({1, -t.w[(size_t)D] * std::pow(geo, -(double)j)});
  }
  coarse.push_back({1, 0.0});

  double hmax = 2.0 / (double)std::max(cell_budget - 4 * D, cell_budget / 5);
  std::vector<PointRep> edges;
  edges.reserve(coarse.size() + (size_t)(2.5 / hmax));
  for (size_t e = 0; e + 1 < coarse.size(); ++e) {
    edges.push_back(coarse[e]);
    double len = edge_gap(coarse[e], coarse[e + 1]);
    if (len > hmax) {
      long parts = (long)std::ceil(len / hmax);
      if (coarse[e].anchor == coarse[e + 1].anchor) {
        for (long s = 1; s < parts; ++s)
          edges.push_back({coarse[e].anchor,
                           coarse[e].off + len * (double)s / (double)parts});
      } else {
        double xa = coarse[e].x();
        for (long s = 1; s < parts; ++s)
          edges.push_back(
              PointRep::from_double(xa + len * (double)s / (double)parts));
      }
    }
  }
  edges.push_back(coarse.back());

  size_t nc = edges.size() - 1;
  std::vector<double> ex(edges.size());
  for (size_t e = 0; e < edges.size(); ++e) ex[e] = edges[e].x();
  std::vector<double> len(nc);
  for (size_t c = 0; c < nc; ++c) {
    len[c] = edge_gap(edges[c], edges[c + 1]);
    if (!(len[c] > 0.0) || !(ex[c + 1] > ex[c]))
      fail(ErrCode::Internal, "density grid produced an empty cell");
  }

  DensityEstimate d;
  d.edges = edges;
  {
    auto it0 = std::lower_bound(ex.begin(), ex.end(), -im.gu[0]);
    auto it1 = std::lower_bound(ex.begin(), ex.end(), 0.0);
    if (it0 == ex.end() || *it0 != -im.gu[0] || it1 == ex.end() || *it1 != 0.0)
      fail(ErrCode::Internal, "density grid lost a base cell edge");
    d.base_begin = (size_t)(it0 - ex.begin());
    d.base_end = (size_t)(it1 - ex.begin());
  }

  // one preimage interval per branch and target cell; weights are overlap
  // fractions of the source cells, making rows stochastic up to roundoff.
  // Comparisons and overlaps stay in anchored offsets: next to the
  // endpoints the cells are far narrower than one ulp of the raw
  // coordinate, so raw-x geometry would weld the deepest cell shut.
  struct Hit {
    int32_t src;
    double w;
  };
  auto edge_before = [](const PointRep& a, const PointRep& b) {
    double xa = a.x(), xb = b.x();
    if (xa != xb) return xa < xb;
    if (a.anchor != b.anchor) return a.anchor < b.anchor;
    return a.off < b.off;
  };
  std::vector<std::vector<Hit>> by_target(nc);
  parallel_for((int64_t)nc, threads, [&](int64_t jb, int64_t je) {
    for (int64_t j = jb; j < je; ++j)
      for (Branch b : {Branch::Minus, Branch::Plus}) {
        PointRep lo = inverse_branch(m, b, edges[(size_t)j]);
        PointRep hi = inverse_branch(m, b, edges[(size_t)j + 1]);
        if (edge_before(hi, lo)) std::swap(lo, hi);
        long s = (long)(std::upper_bound(edges.begin(), edges.end(), lo,
                                         edge_before) -
                        edges.begin()) -
                 1;
        if (s < 0) s = 0;
        for (size_t i = (size_t)s; i < nc && edge_before(edges[i], hi);
             ++i) {
          const PointRep& a = edge_before(edges[i], lo) ? lo : edges[i];
          const PointRep& q = edge_before(hi, edges[i + 1]) ? hi
                                                            : edges[i + 1];
          double ov = edge_gap(a, q);
          if (ov > 0.0)
            by_target[(size_t)j].push_back({(int32_t)i, ov / len[i]});
        }
      }
  });

  std::vector<long> row_ptr(nc + 1, 0);
  for (size_t j = 0; j < nc; ++j)
    for (const Hit& h : by_target[j]) ++row_ptr[(size_t)h.src + 1];
  for (size_t i = 0; i < nc; ++i) row_ptr[i + 1] += row_ptr[i];
  std::vector<int32_t> col((size_t)row_ptr[nc]);
  std::vector<double> wgt((size_t)row_ptr[nc]);
  {
    std::vector<long> cursor(row_ptr.begin(), row_ptr.end() - 1);
    for (size_t j = 0; j < nc; ++j)
      for (const Hit& h : by_target[j]) {
        long p = cursor[(size_t)h.src]++;
        col[(size_t)p] = (int32_t)j;
        wgt[(size_t)p] = h.w;
      }
  }
  by_target.clear();
  by_target.shrink_to_fit();
  for (size_t i = 0; i < nc; ++i) {
    double sum = 0.0;
    for (long p = row_ptr[i]; p < row_ptr[i + 1]; ++p) sum += wgt[(size_t)p];
    if (!(sum > 0.0))
      fail(ErrCode::Internal, "transfer matrix row lost its mass");
    for (long p = row_ptr[i]; p < row_ptr[i + 1]; ++p) wgt[(size_t)p] /= sum;
  }

  // a deep tail cell keeps an orbit for up to 1/(1 - P_ii) steps, and plain
  // power iteration needs about that many sweeps to drain it. Iterate the
  // embedded jump chain instead (self-loops stripped, rows rescaled) and
  // weight the jump-chain mass back by the mean dwell time at the end.
  // Sweeps are serial so the result does not depend on the thread count.
  std::vector<double> dwell(nc);
  std::vector<double> jw(wgt);
  for (size_t i = 0; i < nc; ++i) {
    double self = 0.0;
    for (long p = row_ptr[i]; p < row_ptr[i + 1]; ++p)
      if ((size_t)col[(size_t)p] == i) self += jw[(size_t)p];
    double out = 1.0 - self;
    if (!(out > 0.0))
      fail(ErrCode::Internal, "transfer matrix cell traps all its mass");
    for (long p = row_ptr[i]; p < row_ptr[i + 1]; ++p) {
      if ((size_t)col[(size_t)p] == i)
        jw[(size_t)p] = 0.0;
      else
        jw[(size_t)p] /= out;
    }
    dwell[i] = 1.0 / out;
  }

  // seed with the local density shape dist^(ell-1) near the fixed points so
  // the tail starts near its stationary mass
  std::vector<double> v(nc), nxt(nc);
  {
    double l1 = m.params.ell1, l2 = m.params.ell2;
    for (size_t c = 0; c < nc; ++c) {
      const PointRep& A = edges[c];
      const PointRep& B = edges[c + 1];
      double w = len[c];
      if (A.anchor == -1 && B.anchor == -1)
        w += (std::pow(B.off, l1) - std::pow(A.off, l1)) / l1;
      else if (A.anchor == 1 && B.anchor == 1)
        w += (std::pow(-A.off, l2) - std::pow(-B.off, l2)) / l2;
      v[c] = w / dwell[c];
    }
    double s = std::accumulate(v.begin(), v.end(), 0.0);
    for (double& x : v) x /= s;
  }
  double resid = std::numeric_limits<double>::infinity();
  long sweep = 0;
  while (sweep < max_sweeps) {
    ++sweep;
    std::fill(nxt.begin(), nxt.end(), 0.0);
    for (size_t i = 0; i < nc; ++i) {
      double vi = v[i];
      if (vi == 0.0) continue;
      for (long p = row_ptr[i]; p < row_ptr[i + 1]; ++p)
        nxt[(size_t)col[(size_t)p]] += vi * jw[(size_t)p];
    }
    double sum = std::accumulate(nxt.begin(), nxt.end(), 0.0);
    for (double& x : nxt) x /= sum;
    resid = 0.0;
    for (size_t c = 0; c < nc; ++c) resid += std::fabs(nxt[c] - v[c]);
    v.swap(nxt);
    if (resid < 1e-10) break;
  }
  d.sweeps = sweep;
  d.stalled = !(resid < 1e-10);

  // reconstruct the stationary mass of the original chain and report its
  // own invariance defect
  for (size_t c = 0; c < nc; ++c) v[c] *= dwell[c];
  {
    double s = std::accumulate(v.begin(), v.end(), 0.0);
    for (double& x : v) x /= s;
  }
  std::fill(nxt.begin(), nxt.end(), 0.0);
  for (size_t i = 0; i < nc; ++i) {
    double vi = v[i];
    if (vi == 0.0) continue;
    for (long p = row_ptr[i]; p < row_ptr[i + 1]; ++p)
      nxt[(size_t)col[(size_t)p]] += vi * wgt[(size_t)p];
  }
  {
    double r = 0.0;
    for (size_t c = 0; c < nc; ++c) r += std::fabs(nxt[c] - v[c]);
    d.invariance_residual = r;
  }
  d.mass = std::move(v);
  d.density.resize(nc);
  for (size_t c = 0; c < nc; ++c) d.density[c] = d.mass[c] / len[c];
  return d;
}

double base_cell_mass(const DensityEstimate& d) {
  double acc = 0.0;
  for (size_t c = d.base_begin; c < d.base_end; ++c) acc += d.mass[c];
  return acc;
}

KacCheck kac_check(const DensityEstimate& d, const TailCurve& tail) {
  KacCheck k;
  k.base_mass = base_cell_mass(d);
  k.mean_tau = tail.mean_tau;
  k.product = k.base_mass * k.mean_tau;
  return k;
}

EntropyEstimate pesin_entropy(const MapRealization& m,
                              const DensityEstimate& d, long orbit_len,
                              uint64_t seed, long burn_in, int threads) {
  if (d.mass.empty()) fail(ErrCode::Config, "entropy needs a density estimate");
  if (orbit_len < 1000 || burn_in < 0 || threads < 1)
    fail(ErrCode::Config, "entropy orbit needs at least 1000 steps");

  EntropyEstimate e;
  e.seed = seed;

  size_t nc = d.mass.size();
  double hq = 0.0;
  for (size_t c = 0; c < nc; ++c) {
    const PointRep& A = d.edges[c];
    const PointRep& B = d.edges[c + 1];
    double mean;
    if (A.anchor == B.anchor) {
      int anc = A.anchor;
      mean = gauss5([&](double off) {
               return safe_log_gprime(m, PointRep{anc, off});
             }, A.off, B.off) /
             (B.off - A.off);
    } else {
      double xa = A.x(), xb = B.x();
      mean = gauss5([&](double x) {
               return safe_log_gprime(m, PointRep::from_double(x));
             }, xa, xb) /
             (xb - xa);
    }
    hq += d.mass[c] * mean;
  }
  e.quadrature = hq;

  int W = threads;
  long per = orbit_len / W;
  std::vector<double> part((size_t)W, 0.0);
  std::vector<long> steps((size_t)W, per);
  steps[0] += orbit_len - per * W;
  parallel_for((int64_t)W, W, [&](int64_t wb, int64_t we) {
    for (int64_t w = wb; w < we; ++w) {
      CounterRng rng(seed, (uint64_t)w);
      double x0 = -1.0 + 2.0 * rng.next_double();
      if (x0 == -1.0 || x0 == 0.0) x0 += 1e-12;
      PointRep p = PointRep::from_double(x0);
      for (long s = 0; s < burn_in; ++s) p = eval_g(m, p);
      double acc = 0.0;
      for (long s = 0; s < steps[(size_t)w]; ++s) {
        acc += safe_log_gprime(m, p);
        p = eval_g(m, p);
      }
      part[(size_t)w] = acc;
    }
  });
  double total = 0.0;
  for (double a : part) total += a;
  e.birkhoff = total / (double)orbit_len;
  e.orbit_len = orbit_len;
  e.rel_gap = std::fabs(e.quadrature - e.birkhoff) /
              std::max({std::fabs(e.quadrature), std::fabs(e.birkhoff),
                        1e-300});
  return e;
}

namespace {

enum class Obs { X, CosPiX, SqrtSgn, Bump, Const };

Obs parse_obs(const std::string& id) {
  if (id == "x") return Obs::X;
  if (id == "cospix") return Obs::CosPiX;
  if (id == "sqrtsgn") return Obs::SqrtSgn;
  if (id == "bump") return Obs::Bump;
  if (id == "const") return Obs::Const;
  fail(ErrCode::Config, "unknown observable id: " + id);
}

double smoothstep(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return 0.5 * (1.0 - std::cos(std::numbers::pi * t));
}

double obs_eval(Obs o, double x) {
  switch (o) {
    case Obs::X:
      return x;
    case Obs::CosPiX:
      return std::cos(std::numbers::pi * x);
    case Obs::SqrtSgn:
      return x < 0 ? -std::sqrt(-x) : std::sqrt(x);
    case Obs::Bump:
      return smoothstep((x - 0.05) / 0.1) * smoothstep((0.55 - x) / 0.1);
    case Obs::Const:
      return 1.0;
  }
  return 0.0;
}

// sum_{l >= n} l^-1 L(l) by direct summation of a head stretch plus an
// integral tail on the log axis. Best effort: accurate when L decays
// quickly; the slowly decaying critical laws take the symbolic route.
double numeric_tail_sum(const SvExpr& L, double n) {
  long n0 = (long)std::ceil(n);
  if (n0 < 1) n0 = 1;
  double head = 0.0;
  long direct_end = n0 + 2000;
  for (long l = n0; l < direct_end; ++l)
    head += sv_eval(L, (double)l) / (double)l;
  double a = std::log((double)direct_end - 0.5);
  double tail = 0.0;
  for (int panel = 0; panel < 600 && a < 700.0; ++panel) {
    double b = std::min(a * 1.125, 700.0);
    double piece = gauss5(
        [&](double s) { return sv_eval(L, std::exp(s)); }, a, b);
    tail += piece;
    a = b;
    if (panel > 4 && piece < 1e-9 * (head + tail + 1e-300)) break;
  }
  return head + tail;
}

}  // namespace

std::vector<std::string> observable_ids() {
  return {"x", "cospix", "sqrtsgn", "bump", "const"};
}

double observable_eval(const std::string& id, double x) {
  return obs_eval(parse_obs(id), x);
}

EnvelopeRule envelope_rule(const TailProfile& prof) {
  if (prof.verdict != MeasureVerdict::FiniteMeasure)
    fail(ErrCode::VerdictGate,
         "decay envelopes need a finite measure verdict");
  if (!prof.have_combined)
    fail(ErrCode::UnsupportedClassification,
         "combined correction law unavailable for the envelope");
  EnvelopeRule r;
  r.beta = prof.beta;
  r.L = prof.L_combined;
  if (std::fabs(prof.beta - 1.0) > 1e-9) {
    r.route = EnvelopeRule::Route::PowerLaw;
    r.law = RvExpr{1.0 - 1.0 / prof.beta, prof.L_combined};
    char buf[64];
    std::snprintf(buf, sizeof buf, "n^%g", 1.0 - 1.0 / prof.beta);
    r.pretty = std::string(buf) + " * " + sv_to_string(prof.L_combined);
  } else {
    TailSum ts = symbolic_tail_sum(prof.L_combined);
    if (ts.closed_form) {
      r.route = EnvelopeRule::Route::SymbolicSum;
      r.sum_law = ts.expr;
      r.pretty = ts.pretty;
    } else {
      r.route = EnvelopeRule::Route::NumericSum;
      r.pretty = "numeric tail sum of l^-1 * " + sv_to_string(prof.L_combined);
    }
  }
  return r;
}

double envelope_value(const EnvelopeRule& r, double n) {
  switch (r.route) {
    case EnvelopeRule::Route::PowerLaw:
      return rv_eval(r.law, n);
    case EnvelopeRule::Route::SymbolicSum:
      return sv_eval(r.sum_law, n);
    case EnvelopeRule::Route::NumericSum:
      return numeric_tail_sum(r.L, n);
  }
  return 0.0;
}

double predicted_envelope(const TailProfile& prof, double n) {
  return envelope_value(envelope_rule(prof), n);
}

CorrelationSeries correlation_decay(const MapRealization& m,
                                    const TailProfile& prof,
                                    const std::string& phi1,
                                    const std::string& phi2, long n_max,
                                    long orbit_len, uint64_t seed, int threads,
                                    long burn_in) {
  if (prof.verdict != MeasureVerdict::FiniteMeasure)
    fail(ErrCode::VerdictGate,
         "correlation runs need a finite measure verdict");
  Obs o1 = parse_obs(phi1), o2 = parse_obs(phi2);
  if (n_max < 1 || orbit_len < 1 || burn_in < 0 || threads < 1)
    fail(ErrCode::Config, "correlation run needs positive sizes");

  int W = threads;
  long T_seg = orbit_len / W;
  if (T_seg < 8 * (n_max + 1))
    fail(ErrCode::InsufficientOrbit,
         "orbit too short for the lag window: need 8*(n_max+1) steps per "
         "worker");

  long K_seg = std::max<long>(
      4, std::min<long>(std::max<long>(1, 128 / W),
                        T_seg / (4 * (n_max + 1))));
  long bl = T_seg / K_seg;

  CorrelationSeries s;
  s.phi1 = phi1;
  s.phi2 = phi2;
  s.n_max = n_max;
  s.orbit_len = T_seg * W;
  s.seed = seed;
  s.segments = W;
  s.blocks = K_seg * W;

  // pass 1: orbits and their observable series, one segment per worker
  std::vector<std::vector<double>> F((size_t)W), G((size_t)W);
  std::vector<double> sum1((size_t)W, 0.0), sum2((size_t)W, 0.0);
  parallel_for((int64_t)W, W, [&](int64_t wb, int64_t we) {
    for (int64_t w = wb; w < we; ++w) {
      CounterRng rng(seed, (uint64_t)w);
      double x0 = -1.0 + 2.0 * rng.next_double();
      if (x0 == -1.0 || x0 == 0.0) x0 += 1e-12;
      PointRep p = PointRep::from_double(x0);
      for (long t = 0; t < burn_in; ++t) p = eval_g(m, p);
      auto& f = F[(size_t)w];
      auto& g = G[(size_t)w];
      f.resize((size_t)T_seg);
      g.resize((size_t)T_seg);
      double a1 = 0.0, a2 = 0.0;
      for (long t = 0; t < T_seg; ++t) {
        double x = p.x();
        f[(size_t)t] = obs_eval(o1, x);
        g[(size_t)t] = obs_eval(o2, x);
        a1 += f[(size_t)t];
        a2 += g[(size_t)t];
        p = eval_g(m, p);
      }
      sum1[(size_t)w] = a1;
      sum2[(size_t)w] = a2;
    }
  });
  double m1 = 0.0, m2 = 0.0;
  for (int w = 0; w < W; ++w) {
    m1 += sum1[(size_t)w];
    m2 += sum2[(size_t)w];
  }
  m1 /= (double)s.orbit_len;
  m2 /= (double)s.orbit_len;
  s.mean1 = m1;
  s.mean2 = m2;

  // pass 2: centered lag sums per block via FFT cross-correlation, plus the
  // pairs straddling block boundaries, accumulated per segment
  size_t lags = (size_t)n_max + 1;
  std::vector<std::vector<double>> seg_R((size_t)W,
                                         std::vector<double>(lags, 0.0));
  std::vector<std::vector<double>> block_cov((size_t)(W * K_seg),
                                             std::vector<double>(lags, 0.0));
  parallel_for((int64_t)W, W, [&](int64_t wb, int64_t we) {
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> packed, spec, corr;
    for (int64_t w = wb; w < we; ++w) {
      auto& f = F[(size_t)w];
      auto& g = G[(size_t)w];
      for (auto& x : f) x -= m1;
      for (auto& x : g) x -= m2;

      for (long b = 0; b < K_seg; ++b) {
        long t0 = b * bl;
        long blen = (b == K_seg - 1) ? T_seg - t0 : bl;
        size_t P = 1;
        while ((long)P < blen + n_max + 1) P <<= 1;
        packed.assign(P, {0.0, 0.0});
        for (long t = 0; t < blen; ++t)
          packed[(size_t)t] = {f[(size_t)(t0 + t)], g[(size_t)(t0 + t)]};
        fft.fwd(spec, packed);
        // unpack the two real spectra and multiply into the correlation
        // spectrum; the result is Hermitian so the conjugate slot mirrors it
        for (size_t k = 0; k <= P / 2; ++k) {
          size_t kc = (P - k) & (P - 1);
          std::complex<double> A = spec[k], Bc = std::conj(spec[kc]);
          std::complex<double> S1 = 0.5 * (A + Bc);
          std::complex<double> S2 =
              std::complex<double>(0.0, -0.5) * (A - Bc);
          std::complex<double> X = S1 * std::conj(S2);
          spec[k] = X;
          spec[kc] = std::conj(X);
        }
        fft.inv(corr, spec);
        auto& cov = block_cov[(size_t)(w * K_seg + b)];
        for (size_t n = 0; n < lags && (long)n < blen; ++n) {
          double R = corr[n].real();
          seg_R[(size_t)w][n] += R;
          cov[n] = R / (double)(blen - (long)n);
        }
      }
      for (long b = 1; b < K_seg; ++b) {
        long t1 = b * bl;
        for (long n = 1; n <= n_max; ++n) {
          double acc = 0.0;
          for (long t = t1 - n; t < t1; ++t)
            acc += f[(size_t)(t + n)] * g[(size_t)t];
          seg_R[(size_t)w][(size_t)n] += acc;
        }
      }
      f.clear();
      f.shrink_to_fit();
      g.clear();
      g.shrink_to_fit();
    }
  });

  s.C.assign(lags, 0.0);
  for (size_t n = 0; n < lags; ++n) {
    double R = 0.0;
    for (int w = 0; w < W; ++w) R += seg_R[(size_t)w][n];
    s.C[n] = std::fabs(R / (double)(W * (T_seg - (long)n)));
  }

  // moving-block bootstrap over the per-block covariances
  const int B = 200;
  long KB = W * K_seg;
  CounterRng brng(seed, 0x626f6f74ULL);
  std::vector<double> acc(lags, 0.0), acc2(lags, 0.0), stat(lags);
  for (int rep = 0; rep < B; ++rep) {
    std::fill(stat.begin(), stat.end(), 0.0);
    for (long draw = 0; draw < KB; ++draw) {
      size_t idx = (size_t)(brng.next() % (uint64_t)KB);
      const auto& cov = block_cov[idx];
      for (size_t n = 0; n < lags; ++n) stat[n] += cov[n];
    }
    for (size_t n = 0; n < lags; ++n) {
      double v = stat[n] / (double)KB;
      acc[n] += v;
      acc2[n] += v * v;
    }
  }
  s.err.assign(lags, 0.0);
  for (size_t n = 0; n < lags; ++n) {
    double mean = acc[n] / B;
    double var = std::max(0.0, acc2[n] / B - mean * mean);
    s.err[n] = std::sqrt(var * (double)B / (double)(B - 1));
  }

  if (s.err[0] > 0.5 * s.C[0] + 1e-15)
    fail(ErrCode::InsufficientOrbit,
         "correlation error bars exceed the variance signal; increase "
         "orbit_len");

  // predicted envelope column; absent law or below-cutoff lags stay NaN
  double nan = std::numeric_limits<double>::quiet_NaN();
  s.envelope.assign(lags, nan);
  bool have_env = true;
  EnvelopeRule rule;
  try {
    rule = envelope_rule(prof);
  } catch (const Error& e) {
    if (e.code() != ErrCode::UnsupportedClassification) throw;
    have_env = false;
  }
  if (have_env)
    for (size_t n = 1; n < lags; ++n) {
      try {
        s.envelope[n] = envelope_value(rule, (double)n);
      } catch (const Error& e) {
        if (e.code() != ErrCode::Domain) throw;
      }
    }

  // running maxima from the far end; the envelope bounds peaks, not the
  // oscillating raw values
  std::vector<double> M(lags, 0.0);
  std::vector<size_t> arg(lags, 0);
  {
    double cur = -1.0;
    size_t a = lags - 1;
    for (long n = n_max; n >= std::min<long>(s.n_fit_lo, n_max); --n) {
      if (s.C[(size_t)n] > cur) {
        cur = s.C[(size_t)n];
        a = (size_t)n;
      }
      M[(size_t)n] = cur;
      arg[(size_t)n] = a;
    }
  }
  double slog = 0.0;
  long scnt = 0;
  for (long n = s.n_fit_lo; n <= n_max; ++n) {
    double env = s.envelope[(size_t)n];
    if (M[(size_t)n] > 0.0 && std::isfinite(env) && env > 0.0) {
      slog += std::log(M[(size_t)n]) - std::log(env);
      ++scnt;
    }
  }
  if (scnt > 0) {
    s.K = std::exp(slog / (double)scnt);
    for (long n = s.n_fit_lo; n <= n_max; ++n) {
      double env = s.envelope[(size_t)n];
      if (!(M[(size_t)n] > 0.0) || !std::isfinite(env)) continue;
      if (M[(size_t)n] - 2.0 * s.err[arg[(size_t)n]] > s.K * env)
        ++s.violations;
    }
  }
  {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    long cnt = 0;
    for (long n = s.n_fit_lo; n <= n_max; ++n) {
      if (!(M[(size_t)n] > 0.0)) continue;
      double x = std::log((double)n), y = std::log(M[(size_t)n]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++cnt;
    }
    if (cnt >= 3) {
      double det = cnt * sxx - sx * sx;
      s.slope = (cnt * sxy - sx * sy) / det;
      double b0 = (sy - s.slope * sx) / cnt;
      double ssr = 0.0;
      for (long n = s.n_fit_lo; n <= n_max; ++n) {
        if (!(M[(size_t)n] > 0.0)) continue;
        double r = std::log(M[(size_t)n]) - (b0 + s.slope * std::log((double)n));
        ssr += r * r;
      }
      s.slope_se = std::sqrt(ssr / (double)(cnt - 2) / (sxx - sx * sx / cnt));
    }
  }
  return s;
}

void correlation_write_csv(const CorrelationSeries& s,
                           const std::string& path) {
  CsvWriter out(path, {"n", "C_n", "envelope", "K_envelope", "bootstrap_err"});
  for (long n = 0; n <= s.n_max; ++n) {
    double env = s.envelope[(size_t)n];
    out.row_prefixed(n, {s.C[(size_t)n], env, s.K * env, s.err[(size_t)n]});
  }
}

nlohmann::json density_to_json(const DensityEstimate& d) {
  return nlohmann::json{{"cells", d.mass.size()},
                        {"invariance_residual", d.invariance_residual},
                        {"sweeps", d.sweeps},
                        {"stalled", d.stalled},
                        {"base_mass", base_cell_mass(d)}};
}

nlohmann::json entropy_to_json(const EntropyEstimate& e) {
  return nlohmann::json{{"quadrature", e.quadrature},
                        {"birkhoff", e.birkhoff},
                        {"rel_gap", e.rel_gap},
                        {"orbit_len", e.orbit_len},
                        {"seed", e.seed}};
}

nlohmann::json kac_to_json(const KacCheck& k) {
  return nlohmann::json{{"base_mass", k.base_mass},
                        {"mean_tau", k.mean_tau},
                        {"product", k.product}};
}

nlohmann::json correlation_to_json(const CorrelationSeries& s) {
  return nlohmann::json{{"phi1", s.phi1},
                        {"phi2", s.phi2},
                        {"n_max", s.n_max},
                        {"orbit_len", s.orbit_len},
                        {"seed", s.seed},
                        {"segments", s.segments},
                        {"blocks", s.blocks},
                        {"C0", s.C[0]},
                        {"err0", s.err[0]},
                        {"K", s.K},
                        {"slope", s.slope},
                        {"slope_se", s.slope_se},
                        {"violations", s.violations}};
}

}  // namespace ndyn
