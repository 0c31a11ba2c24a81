#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "specflow/cfrac.hpp"
#include "specflow/fixed.hpp"
#include "specflow/roof.hpp"
#include "specflow/rotations.hpp"

namespace specflow {

// x_n = [x' + n alpha] - [x + n alpha] for n = 0..n_max, with the indices
// k_0 = 0 < k_1 < ... of the nonzero entries (n >= 1).
struct SparseSequence {
  std::vector<int8_t> values;
  std::vector<int64_t> k;
  double R = 1;

  int64_t n_max() const { return static_cast<int64_t>(values.size()) - 1; }
  static SparseSequence from_values(std::vector<int8_t> values, double R = 1);
};

SparseSequence crossing_sequence(const RealRep& alpha, double x, double x_prime, int64_t n_max);
// Same, on 128-bit coordinates (x' = x + delta exactly, delta in (-1/2, 1/2]).
SparseSequence crossing_sequence(const Coord& alpha, const Lifted& x, const Lifted& x_prime, int64_t n_max);

struct SparsenessVerdict {
  bool a_sparse = false;
  bool ab_sparse = false;
  int64_t min_gap = 0;  // over k_{m+1} - k_m, m >= 1 (0 when undefined)
  int64_t max_gap = 0;
  std::size_t crossings = 0;
};

SparsenessVerdict sparseness_check(const SparseSequence& seq, double a, double b);

struct SparseSumVerdict {
  bool pass = true;
  double worst_ratio = 0;  // max |S_n| / (R (1 + n / a))
  int64_t worst_n = 0;
};

SparseSumVerdict sparse_sum_bound(const SparseSequence& seq, double a);

// Gap statistics of crossing sequences at a list of distances.
struct GapSweep {
  std::vector<double> d;
  std::vector<double> min_gap_d, max_gap_d;  // (min gap) d, (max gap) d
  double C1 = 0, C2 = 0;                     // min and max of the above
};

GapSweep gap_sweep(const Coord& alpha, const std::vector<double>& distances, const std::vector<double>& starts,
                   int64_t crossings_per_run = 40);

// A crossing counter N_j evaluated on a pair of lifted points.
struct Counter {
  enum class Kind { XLine, YLine, Heis1, Heis2 };
  Kind kind = Kind::XLine;
  u128 at = 0;  // line position for XLine / YLine
  std::string label;
};

struct CocycleModel {
  std::vector<double> H;           // h_1 .. h_s
  std::vector<Counter> counters;   // N_1 .. N_s
  bool case_i = false;             // gamma != 0: H ends with gamma, gamma and N_{s+1} = [y'] - [y]
  double gamma = 0;
  double R = 1, B = 0;
  double L = 0;                    // Lipschitz constant of g in the max metric
  double C0 = 0, C1 = 0, C2 = 0;
  double C1_raw = 0, C2_raw = 0;   // sweep extremes before safety factors and normalization
  double C1_safety = 0.5, C2_safety = 2.0;
  std::vector<double> sweep_d;
  double h = 0;                    // min |w| over H'
  std::vector<int> h_argmin;       // coefficient vector attaining h
  double p0 = 0, p1 = 0;
  int independence_K = 0;          // integer relation search bound
  uint64_t max_partial_quotient = 0;
  std::vector<std::string> warnings;
  Coord alpha, beta;

  std::size_t s() const { return H.size(); }
  double kappa(double eps) const;
  double delta(double eps, int64_t N) const;
  double eps_cap() const;  // min(1/2, C0 C1 / s, h / (4 s))
  json to_json() const;
};

CocycleModel build_cocycle_model(const RoofFunction& f, const RotationVector2& rot);

// A pair of lifted points with minimal displacement (each difference in (-1/2, 1/2]).
struct LiftedPair {
  Lifted x, y, xp, yp;
  double dx = 0, dy = 0;
  double d() const;
};

LiftedPair lift_pair(const TorusPoint& p, const TorusPoint& q);
LiftedPair lift_pair(double x, double y, double xp, double yp);

// One step of the translation on the plane.
void advance(LiftedPair& pr, const Coord& alpha, const Coord& beta);

// Counter values N_j on a pair and the boundary pieces b, N_{s+1}.
int counter_value(const Counter& c, const LiftedPair& pr, const Coord& alpha, const Coord& beta);
int boundary_counter(const CocycleModel& m, const LiftedPair& pr);  // N_{s+1}
double boundary_b(const CocycleModel& m, const LiftedPair& pr);     // b = gamma {x'}

enum class Identity { Sawtooth, Heisenberg, Master };

struct IdentityResidual {
  double lhs = 0, rhs = 0, residual = 0;
  double budget = 0;  // floating rounding bound of both sides
};

// u^(n)(x') - u^(n)(x) for u = {x}, h^(n)(p') - h^(n)(p) for the Heisenberg
// term, or f^(n)(p') - f^(n)(p) for the full roof: direct sum versus the
// crossing-count decomposition.
IdentityResidual cocycle_identity_residual(const CocycleModel& model, const RoofFunction& f, const LiftedPair& pr,
                                           int64_t n, Identity which = Identity::Master);

struct RatnerWitness {
  enum class Status { Ok, NoWindow, ModelFailure };
  Status status = Status::Ok;
  std::string message;

  int64_t M = 0, L = 0;
  double p = 0, p_rounding = 0;
  double good_fraction = 0;
  int64_t good_count = 0;
  double eps = 0, eps_used = 0;
  bool eps_clamped = false;
  double d = 0, delta = 0, kappa = 0;
  bool within_delta = false;
  double ratio = 0;  // L / M

  // construction trace
  int64_t m1 = 0, m2 = 0, M1 = 0, M2 = 0;
  int chosen = 0;
  double p_M1 = 0, p_M2 = 0;
  std::vector<int> jump_vector;  // N^(M2) - N^(M1)
  int64_t horizon = 0;

  // checks
  bool M_in_range = false;    // C1/d <= M <= 3 s C2 / d + 2
  bool good_bound = false;    // good_count >= L - dL/C1 - 1
  bool eq25 = false;          // termwise drift inequality over the window
  double eq25_worst = 0;      // max of lhs - rhs
  bool valid = false;         // L/M >= kappa, p0 <= |p| <= p1, good > 1 - eps, M, L >= N

  json to_json() const;
};

RatnerWitness witness_constructive(const CocycleModel& model, const RoofFunction& f, const TorusPoint& p,
                                   const TorusPoint& q, double eps, int64_t N);

struct EmpiricalWitness {
  int64_t M = 0, L = 0;
  double p = 0;
  double good_fraction = 0;
  std::size_t windows = 0;
};

// Scan windows [M, M + L), M = M_lo, M_lo + stride, ..., M_hi; p is the
// window median of f^(n)(q) - f^(n)(p). Windows with |p| < p_min are skipped.
// Best score wins; ties go to the smallest M.
EmpiricalWitness witness_empirical(const RoofFunction& f, const TorusPoint& p, const TorusPoint& q, double eps,
                                   int64_t M_lo, int64_t M_hi, int64_t L, int64_t stride = 1, double p_min = 0);

// f^(n)(q) - f^(n)(p) for n = 0..n_max by stepping both orbits.
std::vector<double> difference_series(const RoofFunction& f, const TorusPoint& p, const TorusPoint& q, int64_t n_max);

}  // namespace specflow
