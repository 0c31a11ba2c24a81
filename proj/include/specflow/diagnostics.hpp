#pragma once

#include <gmpxx.h>

#include <complex>
#include <cstdint>
#include <vector>

#include "specflow/flow.hpp"
#include "specflow/rng.hpp"
#include "specflow/roof.hpp"

namespace specflow {

// h(x) = constant + slope x + sum d {x - at} + sum height [x >= at]
//        + sum (a cos 2 pi k x + b sin 2 pi k x), on [0, 1).
struct SliceDescriptor {
  struct Wave {
    int k = 0;
    double a = 0, b = 0;
  };
  double slope = 0;
  double constant = 0;
  std::vector<Jump> sawtooth;  // d {x - at}
  std::vector<Jump> steps;     // d [x >= at]
  std::vector<Wave> waves;

  double eval(double x) const;
  double derivative(double x) const;
  double second_derivative(double x) const;
  std::vector<double> breakpoints() const;  // sorted, distinct, always contains 0
  double certified_theta() const;           // |slope + sum d| - sum 2 pi |k| sqrt(a^2 + b^2)
  json to_json() const;
  static SliceDescriptor from_json(const json& j);
};

struct ExpSumEstimate {
  double value = 0;       // |integral of exp(2 pi i h)|
  double quad_error = 0;
  double sum_bound = 0;   // N / (pi theta) + Var h' / (2 pi theta^2)
  double theta = 0;
  double var_hprime = 0;
  int N = 0;
  bool pass = false;      // value - quad_error <= sum_bound
};

// theta <= 0 means: use the certified lower bound of |h'|.
ExpSumEstimate exp_sum(const SliceDescriptor& h, double theta, int quad_points);

struct WeakMixingEstimate {
  std::complex<double> integral;  // integral over the torus of exp(2 pi i s f^(n))
  double numeric = 0;             // its modulus
  double quad_error = 0;
  double bound = 0;               // N / (pi |s| theta) + ||f_xx|| / (2 pi |s| theta^2 n)
  int N = 0;
  double theta = 0, fxx_norm = 0;
  std::size_t rectangles = 0;
  bool pass = false;
};

// f^(n) is affine (plus the smooth part) on each rectangle cut by the
// translated discontinuity lines, so each cell is integrated in closed form
// (or by tensor Gauss-Legendre when trigonometric terms are present).
WeakMixingEstimate weak_mixing_bound(const RoofFunction& f, const DerivativeBounds& db, double s, int64_t n,
                                     int quad = 4);

struct LevelSetEstimate {
  double estimate = 0;     // Lebesgue measure of {x : some |f^(j)(x, y) - t| < eps}
  double uncertainty = 0;  // measure of refined cells still straddling the set boundary
  double bound = 0;        // 16 C / (theta c^2) (N c + Theta) eps
  int64_t j_lo = 0, j_hi = 0;
  bool partial = false;    // refinement budget exhausted before certification
  bool pass = false;       // estimate <= bound
};

LevelSetEstimate level_set_measure(const RoofFunction& f, const DerivativeBounds& db, double y, double t, double eps,
                                   int x_grid);

// [x0, x1) x [y0, y1) x [s0, s1) inside the region under the roof.
struct FlowRect {
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1, s0 = 0, s1 = 0;
  bool contains(const FlowPoint& p) const;
  json to_json() const;
  static FlowRect from_json(const json& j);
};
using FlowSet = std::vector<FlowRect>;

// mu^f of a set of pairwise disjoint rectangles (normalized measure); validates heights.
double flow_measure(const RoofFunction& f, const FlowSet& set);

struct CorrelationSeries {
  std::vector<double> times, estimates, stderrs;
  double mu_a = 0, mu_b = 0, product = 0;  // reference mu(A) mu(B)
  std::size_t samples = 0;
  uint64_t seed = 0;
};

// Monte Carlo estimate of mu^f(T_t A intersect B) = mu(A) P(T_t p in B | p in A).
CorrelationSeries correlation(const RoofFunction& f, const FlowSet& A, const FlowSet& B,
                              const std::vector<double>& times, std::size_t samples, uint64_t seed);

struct RigidityRow {
  mpz_class l;
  double max_deviation = 0;  // max |f^(l) - l integral f| over the sample
  double rounding = 0;
  double threshold = 0;      // 2 (sum |d1| + sum |d2|) + 1e-6
  bool pass = false;
};

// Denjoy-Koksma scan at the given common denominators (sawtooth-plus-constant roofs).
std::vector<RigidityRow> rigidity_scan(const RoofFunction& f, const std::vector<mpz_class>& denominators,
                                       std::size_t samples, uint64_t seed);

struct Distribution {
  mpz_class l;
  double V = 0;  // Var f1 + Var f2
  std::vector<double> edges;   // bins + 1 edges spanning [-V, V]
  std::vector<double> masses;  // fraction per bin
  double outside_fraction = 0;
  double mean = 0;
  std::size_t samples = 0;
  uint64_t seed = 0;
};

// Histogram of f^(l) - l integral f over uniform samples.
Distribution empirical_distribution(const RoofFunction& f, const mpz_class& l, int bins, std::size_t samples,
                                    uint64_t seed);

// Exact uniform torus point from stream (seed, index).
TorusPoint random_torus_point(Philox& rng);

}  // namespace specflow
