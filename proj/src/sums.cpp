#include "specflow/sums.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "specflow/errors.hpp"

namespace specflow {

mpz_class floor_sum(mpz_class n, mpz_class m, mpz_class a, mpz_class b) {
  if (n < 0 || m <= 0 || a < 0 || b < 0) throw ValidationError("floor_sum: arguments out of range");
  mpz_class ans = 0;
  while (true) {
    if (a >= m) {
      ans += n * (n - 1) / 2 * (a / m);
      a %= m;
    }
    if (b >= m) {
      ans += n * (b / m);
      b %= m;
    }
    mpz_class y_max = a * n + b;
    if (y_max < m) break;
    n = y_max / m;
    b = y_max % m;
    std::swap(m, a);
  }
  return ans;
}

namespace {

const mpz_class& two128() {
  static const mpz_class v = mpz_class(1) << 128;
  return v;
}

// Error in units of 2^-128, rounded up, plus one for the representative itself;
// exact inputs stay exact.
mpz_class ulps(double err) {
  if (!(err >= 0) || !std::isfinite(err)) throw PrecisionError("non-finite error bound");
  if (err == 0) return 0;
  return mpz_class(std::ceil(std::ldexp(err, 128))) + 1;
}

double ratio(const mpz_class& num, unsigned shift) {
  long e = 0;
  double m = mpz_get_d_2exp(&e, num.get_mpz_t());
  return std::ldexp(m, static_cast<int>(e) - static_cast<int>(shift));
}

}  // namespace

OrbitSum sawtooth_sum(u128 u, double u_err, u128 a, double a_err, uint64_t m, bool certify) {
  OrbitSum out;
  if (m == 0) return out;
  mpz_class U = to_mpz(u), A = to_mpz(a), M(std::to_string(m));
  mpz_class F = floor_sum(M, two128(), A, U);
  mpz_class num = M * U + A * (M * (M - 1) / 2) - (F << 128);
  out.value = ratio(num, 128);
  double md = static_cast<double>(m);
  out.err = md * u_err + 0.5 * md * (md - 1) * a_err + std::fabs(out.value) * 0x1p-52;
  if (certify) {
    mpz_class eu = ulps(u_err), ea = ulps(a_err);
    if (U < eu || U + eu >= two128() || A < ea) {
      out.certified = false;
    } else {
      mpz_class lo = floor_sum(M, two128(), A - ea, U - eu);
      mpz_class hi = floor_sum(M, two128(), A + ea, U + eu);
      out.certified = lo == hi;
    }
  }
  return out;
}

WrapCount wrap_count(u128 u, double u_err, u128 a, double a_err, uint64_t m) {
  mpz_class U = to_mpz(u), A = to_mpz(a), M(std::to_string(m));
  WrapCount w;
  w.count = (U + M * A) >> 128;
  mpz_class eu = ulps(u_err), ea = ulps(a_err);
  mpz_class lo = U - eu - M * ea, hi = U + eu + M * ea;
  if (lo < 0) {
    w.certified = false;
    return w;
  }
  w.certified = ((lo + M * A) >> 128) == ((hi + M * A) >> 128);
  return w;
}

OrbitSum centered_sawtooth_sum_big(u128 u, const RealRep& alpha, const mpz_class& m) {
  if (alpha.bits < 128) throw ValidationError("large orbit sums need at least 128-bit alpha");
  OrbitSum out;
  if (m <= 0) return out;
  unsigned W = alpha.bits;
  mpz_class one = mpz_class(1) << W;
  mpz_class U = to_mpz(u) << (W - 128);
  RealRep fa = alpha.frac();
  mpz_class A = fa.v;
  mpz_class F = floor_sum(m, one, A, U);
  mpz_class tri = m * (m - 1) / 2;
  mpz_class num = m * U + A * tri - F * one - (m << (W - 1));
  mpq_class v(num, one);
  v.canonicalize();
  out.value = v.get_d();
  mpq_class e(tri * (fa.err + 1), one);
  out.err = e.get_d() + std::fabs(out.value) * 0x1p-52;
  mpz_class ea = fa.err + 1;
  if (A < ea) {
    out.certified = false;
  } else {
    out.certified = floor_sum(m, one, A - ea, U) == floor_sum(m, one, A + ea, U);
  }
  return out;
}

std::complex<double> phase_sum(u128 theta0, u128 omega, uint64_t m, double* rounding) {
  constexpr double pi = std::numbers::pi;
  constexpr double u = 0x1p-53;
  double t0 = signed_frac_to_double(theta0);
  std::complex<double> start = std::polar(1.0, 2 * pi * t0);
  if (m == 0) {
    if (rounding) *rounding = 0;
    return {0.0, 0.0};
  }
  if (omega == 0) {
    if (rounding) *rounding = 4 * u * static_cast<double>(m);
    return start * static_cast<double>(m);
  }
  // G_m = e^{i pi (r_m - r_1)} sin(pi r_m) / sin(pi r_1), both r reduced into [-1/2, 1/2)
  u128 wm = omega * static_cast<u128>(m);
  double r1 = signed_frac_to_double(omega), rm = signed_frac_to_double(wm);
  double s1 = std::sin(pi * r1);
  std::complex<double> G = (std::sin(pi * rm) / s1) * std::polar(1.0, pi * (rm - r1));
  if (rounding) *rounding = u * (2 + pi) / std::fabs(s1) + 4 * u * std::abs(G) + 8 * u * std::abs(G);
  return start * G;
}

}  // namespace specflow
