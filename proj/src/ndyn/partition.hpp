#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "ndyn/map_family.hpp"

namespace ndyn {

// Boundary data of the two-sided return-cell structure, kept in distance
// coordinates throughout: z[n] and w[n] are the offsets of the n-th
// preimages of 0 from -1 and +1 along their branches; v[n] and u[n] are the
// distances from 0 of the opposite-branch pullbacks of those preimages.
// v[0], u[0] hold the base-interval endpoints themselves. For n >= 1 the
// v/u columns are the algebraic continuations (z[n-1]/a2)^(1/k2) and
// (w[n-1]/a1)^(1/k1); they coincide with the geometric pullbacks as soon as
// the parent preimage has entered the corresponding neutral window, which
// is also where the small-cell lengths start using them directly.
struct PartitionTable {
  int N = 0;
  std::vector<double> z, w;  // 0..N, strictly decreasing
  std::vector<double> v, u;  // 0..N, strictly decreasing
  // cell lengths; index n holds |Delta_n| resp. |delta_n|, [0] of the small
  // arrays is 0 since those cells start at n = 1
  std::vector<double> len_delta_minus, len_delta_plus;
  std::vector<double> len_small_minus, len_small_plus;
};

// z/w ladders by safeguarded Newton on the branch step phi in offset
// coordinates once the ladder is inside the neutral window; the handful of
// rungs before that go through the full inverse branch.
void compute_x_sequence(const MapRealization& m, int N, std::vector<double>& z,
                        std::vector<double>& w);

// closed-form pullback distances; no root finding
void compute_y_sequence(PartitionTable& t, const MapParams& p);

PartitionTable build_partition(const MapRealization& m, int N);

// One decay law checked at three geometric checkpoints. ratios hold
// empirical/predicted; the verdict asks |ratio-1| to shrink left to right.
struct LawReport {
  std::string name;
  bool ratio_available = true;  // false when no conjugate (or out of domain)
  long checkpoints[3] = {0, 0, 0};
  double ratios[3] = {0.0, 0.0, 0.0};
  bool monotone_approach = false;
};

struct AsymptoticsReport {
  std::vector<LawReport> laws;  // z, w, v, u, Delta-, Delta+, delta-, delta+
};

AsymptoticsReport verify_asymptotics(const PartitionTable& t,
                                     const MapParams& p);
nlohmann::json asymptotics_to_json(const AsymptoticsReport& r);

void partition_write_csv(const PartitionTable& t, const std::string& path);

}  // namespace ndyn
