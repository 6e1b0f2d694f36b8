#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "ndyn/induced.hpp"
#include "ndyn/karamata.hpp"
#include "ndyn/map_family.hpp"
#include "ndyn/partition.hpp"

namespace ndyn {

// Piecewise-constant invariant density on a geometry-adapted grid: ladder
// cells toward the fixed points and toward zero where the dynamics sets the
// scale, uniform splits of whatever remains long. Edges keep their anchor
// representation so the cells hugging the fixed points have exact lengths.
struct DensityEstimate {
  std::vector<PointRep> edges;  // cell c spans (edges[c], edges[c+1])
  std::vector<double> mass;     // invariant mass per cell, sums to one
  std::vector<double> density;  // mass / length
  size_t base_begin = 0, base_end = 0;  // cell range tiling the minus base
  double invariance_residual = 0.0;     // L1 gap to the transfer image
  long sweeps = 0;
  bool stalled = false;  // sweep cap hit before the residual target
};

// Stationary vector of the row-stochastic Ulam matrix, built from
// inverse-branch preimages of each cell. Requires a finite-measure verdict
// (the normalized density exists); a stalled iteration is reported in the
// result rather than thrown. ladder_depth sets how many ladder rungs each
// of the four boundary ladders contributes (-1 picks cell_budget/8, capped
// by the table depth); the rest of the budget buys uniform bulk cells.
DensityEstimate ulam_density(const MapRealization& m, const PartitionTable& t,
                             const InducedMap& im, const TailProfile& prof,
                             long cell_budget, int threads = 1,
                             long max_sweeps = 50000, long ladder_depth = -1);

// Mass the estimate puts on the minus-side base cell.
double base_cell_mass(const DensityEstimate& d);

// Mass of the base cell times the mean return time; the product is one in
// exact arithmetic, so its distance from one measures global consistency
// between the density route and the orbit route.
struct KacCheck {
  double base_mass = 0.0;
  double mean_tau = 0.0;
  double product = 0.0;
};
KacCheck kac_check(const DensityEstimate& d, const TailCurve& tail);

// Entropy as the integral of log|g'|: once against the cell density by
// quadrature, once as a Birkhoff average along a seeded orbit. rel_gap is
// the relative disagreement of the two routes.
struct EntropyEstimate {
  double quadrature = 0.0;
  double birkhoff = 0.0;
  double rel_gap = 0.0;
  long orbit_len = 0;
  uint64_t seed = 0;
};
EntropyEstimate pesin_entropy(const MapRealization& m,
                              const DensityEstimate& d,
                              long orbit_len = 10000000L, uint64_t seed = 1,
                              long burn_in = 10000, int threads = 1);

// Shipped observables, by id:
//   x        identity, Lipschitz
//   cospix   cos(pi x), Lipschitz
//   sqrtsgn  |x|^(1/2) sign(x), 1/2-Hoelder
//   bump     smoothed indicator of [0.05, 0.55], Lipschitz
//   const    constant one (a null test: correlations vanish)
std::vector<std::string> observable_ids();
double observable_eval(const std::string& id, double x);

// Decay envelope predicted from the tail profile. Away from a unit tail
// exponent the law is a closed-form power times the combined correction;
// on it, the summed tail is produced symbolically when the grammar can,
// with direct numeric summation as the reported fallback.
struct EnvelopeRule {
  enum class Route { PowerLaw, SymbolicSum, NumericSum };
  Route route = Route::PowerLaw;
  double beta = 0.0;
  RvExpr law;      // PowerLaw route
  SvExpr sum_law;  // SymbolicSum route
  SvExpr L;        // combined correction, drives the numeric route
  std::string pretty;
};
EnvelopeRule envelope_rule(const TailProfile& prof);
double envelope_value(const EnvelopeRule& r, double n);
double predicted_envelope(const TailProfile& prof, double n);

// Correlation of two shipped observables along one seeded orbit, split into
// per-worker segments, with per-block statistics bootstrapped into error
// bars. The envelope columns and the fitted constant K use running maxima
// (the predicted decay is one-sided).
struct CorrelationSeries {
  std::string phi1, phi2;
  long n_max = 0;
  long orbit_len = 0;  // steps actually used (truncated to whole segments)
  uint64_t seed = 0;
  int segments = 1;
  long blocks = 0;
  double mean1 = 0.0, mean2 = 0.0;
  std::vector<double> C;         // |covariance| per lag, 0..n_max
  std::vector<double> err;       // block-bootstrap standard error
  std::vector<double> envelope;  // NaN below the law's domain cutoff

  long n_fit_lo = 10;  // fit window is [n_fit_lo, n_max]
  double K = 0.0;      // level matching envelope to the running maxima
  double slope = 0.0, slope_se = 0.0;  // log-log line through running maxima
  long violations = 0;  // lags exceeding K*envelope beyond two error bars
};

CorrelationSeries correlation_decay(const MapRealization& m,
                                    const TailProfile& prof,
                                    const std::string& phi1,
                                    const std::string& phi2, long n_max,
                                    long orbit_len, uint64_t seed,
                                    int threads = 1, long burn_in = 10000);

void correlation_write_csv(const CorrelationSeries& s,
                           const std::string& path);

nlohmann::json density_to_json(const DensityEstimate& d);
nlohmann::json entropy_to_json(const EntropyEstimate& e);
nlohmann::json kac_to_json(const KacCheck& k);
nlohmann::json correlation_to_json(const CorrelationSeries& s);

}  // namespace ndyn
