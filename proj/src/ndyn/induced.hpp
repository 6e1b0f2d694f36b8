#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "ndyn/karamata.hpp"
#include "ndyn/map_family.hpp"
#include "ndyn/partition.hpp"

namespace ndyn {

enum class MeasureVerdict { FiniteMeasure, InfiniteMeasure, Unknown };

const char* verdict_name(MeasureVerdict v);

// Tail laws of the return time and the finiteness classification, computed
// from the map parameters alone. chi1 pairs the plus-side correction with
// the exponent 1/beta2; chi2 mirrors it. The invariant density integrates
// iff both tail series converge.
struct TailProfile {
  double beta1 = 0.0, beta2 = 0.0, beta = 0.0;
  double kappa = 0.0;       // inner-branch exponent picked by the beta order
  double lambda_exp = 0.0;  // neutral exponent picked by the beta order

  bool have_minus_law = false, have_plus_law = false;
  SvExpr L_minus, L_plus;  // slowly varying tail factors, read at infinity
  RvExpr chi1, chi2;       // full tail laws (valid with the flags above)
  bool chi1_converges = false, chi2_converges = false;

  bool have_combined = false;
  SvExpr L_combined;  // dominant factor used by correlation envelopes

  MeasureVerdict verdict = MeasureVerdict::Unknown;
};

// Throws UnsupportedClassification when a tail sits exactly on the
// critical exponent and the correction's conjugate is out of grammar.
TailProfile classify_measure(const MapParams& p);

nlohmann::json tail_profile_to_json(const TailProfile& t);

// The first-return system on the cell adjacent to zero on the minus side.
// Borrows the realization and the partition table; both must outlive it.
// gu/gv are the geometric branch-cell ladders (distances from zero): the
// depth-n minus cell spans (gu[n], gu[n-1]), the plus one (gv[n], gv[n-1]).
// They coincide with the table's algebraic u/v once the parent rung falls
// inside the neutral window; the head rungs cross the filled gap and come
// from the full branch inverse instead.
struct InducedMap {
  const MapRealization* map = nullptr;
  const PartitionTable* table = nullptr;
  std::vector<double> gu, gv;

  double domain_len() const { return gu[0]; }
};

InducedMap build_induced(const MapRealization& m, const PartitionTable& t);

// One branch domain of the return map, in distance-from-zero coordinates:
// the cell is the set of points at distance (lo, hi) on the given side.
struct Cell {
  double lo = 0.0, hi = 0.0;
};

Cell cell_minus(const InducedMap& im, long i, long j);
Cell cell_plus(const InducedMap& im, long i, long j);

// One application of the return map, with the realized return time.
struct ReturnResult {
  PointRep x;
  long tau = 0;
  bool truncated = false;
};
ReturnResult induced_step(const InducedMap& im, PointRep x, long max_iter);

// Throws TruncatedReturn past max_iter; x is the signed coordinate in the
// minus-side base cell.
long return_time(const InducedMap& im, double x,
                 long max_iter = 100000000L);

// Minimum of |G'| over a stratified sample of the (i, j) cell grid, via
// the chain rule along each itinerary. Throws ExpansionFails at <= 1.
double check_expansion(const InducedMap& im, long i_max, long j_max,
                       int samples_per_cell = 1000);

// Pairwise distortion of the crossing branch on the depth-n cells: the
// largest log-derivative ratio of any partial chain, normalized by the
// final separation. Boundedness across depths is what the caller tests.
struct DistortionReport {
  std::vector<long> depths;
  std::vector<double> max_ratio;
  double fitted_D = 0.0;  // largest entry of max_ratio
};
DistortionReport check_distortion(const InducedMap& im, Branch side,
                                  const std::vector<long>& depths, int pairs,
                                  uint64_t seed);

// Return-time tail curves: a Monte Carlo estimate under the invariant
// measure of the return map, and an exact Lebesgue cell-mass curve as the
// independent route. When both tail laws exist the curve is fitted with
// nonnegative weights against (chi1, chi2).
struct TailCurve {
  long n_max = 0;
  std::vector<double> tail_mc;    // index n: fraction of returns with tau > n
  std::vector<double> tail_mass;  // Lebesgue mass of {tau > n}, normalized
  double mean_tau = 0.0;
  long recorded = 0;
  long truncated = 0;  // returns that hit the iteration cap
  bool have_fit = false;
  double C1 = 0.0, C2 = 0.0, fit_residual = 0.0;
};

TailCurve empirical_tail(const InducedMap& im, const TailProfile& prof,
                         long n_max, int n_orbits, uint64_t seed,
                         long returns_per_orbit = 100000, int threads = 1,
                         long burn_in = 10000, long max_iter = 100000000L);

void tail_write_csv(const TailCurve& c, const TailProfile& prof,
                    const std::string& path);
void cells_write_csv(const InducedMap& im, long i_max, long j_max,
                     const std::string& path);
nlohmann::json tail_curve_to_json(const TailCurve& c);

// Discrete suspension over the return map: level l carries the mass of
// {tau > l}. Built from the measured tail; truncation at l_max is explicit.
struct Tower {
  long l_max = 0;
  std::vector<double> level_mass;
  double total_mass = 0.0;
  MeasureVerdict verdict = MeasureVerdict::Unknown;
  bool infinite_mass_warning = false;
};

Tower build_tower(const InducedMap& im, const TailCurve& tail,
                  const TailProfile& prof, long l_max);

// Mass of {R > n} for the tower's roof function R(x, l) = tau(x) - l,
// summed over the built levels.
double tower_mass_R_gt(const Tower& tw, long n);

struct TowerPoint {
  PointRep x;
  long level = 0;
};
TowerPoint tower_step(const InducedMap& im, TowerPoint p,
                      long max_iter = 100000000L);

}  // namespace ndyn
