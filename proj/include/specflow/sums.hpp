#pragma once

#include <gmpxx.h>

#include <complex>
#include <cstdint>

#include "specflow/cfrac.hpp"
#include "specflow/fixed.hpp"

namespace specflow {

// sum_{k=0}^{n-1} floor((a k + b) / m) for n >= 0, m > 0, a, b >= 0.
mpz_class floor_sum(mpz_class n, mpz_class m, mpz_class a, mpz_class b);

// A sum along an orbit evaluated on the stored representatives, with a
// bound on the distance to the true sum. certified is false when the
// representatives' error boxes straddle a wrap of the fractional part.
struct OrbitSum {
  double value = 0;
  double err = 0;
  bool certified = true;
};

// sum_{k<m} {u + k a}, u and a as 128-bit fractions with absolute errors.
OrbitSum sawtooth_sum(u128 u, double u_err, u128 a, double a_err, uint64_t m, bool certify = true);

// Number of wraps floor(u + m a) for u, a in [0, 1), as an exact count.
struct WrapCount {
  mpz_class count;
  bool certified = true;
};
WrapCount wrap_count(u128 u, double u_err, u128 a, double a_err, uint64_t m);

// sum_{k<m} ({u + k alpha} - 1/2) for astronomically large m. u is exact;
// alpha is a certified real whose precision should exceed 2 log2(m) + 64.
OrbitSum centered_sawtooth_sum_big(u128 u, const RealRep& alpha, const mpz_class& m);

// sum_{k<m} exp(2 pi i (theta0 + k omega)) in closed form. theta0 and omega
// are 128-bit phases; rounding receives a bound on floating error.
std::complex<double> phase_sum(u128 theta0, u128 omega, uint64_t m, double* rounding);

}  // namespace specflow
