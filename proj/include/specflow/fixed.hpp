#pragma once

#include <gmpxx.h>

#include <cmath>
#include <cstdint>

namespace specflow {

using u128 = unsigned __int128;
using i128 = __int128;

// A point of R/Z stored as a 128-bit binary fraction. Wraparound of the
// unsigned arithmetic is exactly reduction mod 1. err is an absolute bound
// on the distance to the true point.
struct Coord {
  u128 v = 0;
  double err = 0.0;
};

struct TorusPoint {
  Coord x, y;
};

// A real number as integer part plus 128-bit fraction.
struct Lifted {
  int64_t ip = 0;
  u128 frac = 0;
  double err = 0.0;
};

inline double frac_to_double(u128 v) {
  return std::ldexp(static_cast<double>(static_cast<uint64_t>(v >> 64)), -64) +
         std::ldexp(static_cast<double>(static_cast<uint64_t>(v)), -128);
}

// v read as a two's complement fraction in [-1/2, 1/2).
inline double signed_frac_to_double(u128 v) {
  if (v >> 127) return -frac_to_double(~v + 1);
  return frac_to_double(v);
}

// Distance from v to the nearest integer, as a double in [0, 1/2].
inline double circle_dist(u128 v) {
  return (v >> 127) ? frac_to_double(~v + 1) : frac_to_double(v);
}

// Exact conversion of the fractional part of a double.
inline u128 frac_from_double(double x) {
  double f = x - std::floor(x);
  if (f >= 1.0) f = 0.0;
  return static_cast<u128>(std::ldexp(f, 128));
}

inline Coord coord(double x) { return Coord{frac_from_double(x), 0.0}; }

inline TorusPoint torus_point(double x, double y) { return {coord(x), coord(y)}; }

inline double to_double(const Coord& c) { return frac_to_double(c.v); }

inline double to_double(const Lifted& l) {
  return static_cast<double>(l.ip) + frac_to_double(l.frac);
}

inline Lifted lifted(double x) {
  double fl = std::floor(x);
  return Lifted{static_cast<int64_t>(fl), frac_from_double(x - fl), 0.0};
}

// Lifted value plus a u128 fraction (mod-1 step), carrying into the integer part.
inline Lifted add(const Lifted& a, u128 step, double step_err) {
  Lifted r{a.ip, a.frac + step, a.err + step_err};
  if (r.frac < a.frac) ++r.ip;
  return r;
}

// a - b as a double (the two must be close).
inline double diff(const Lifted& a, const Lifted& b) {
  // the fraction difference wraps; borrow from the integer part
  int64_t ip = a.ip - b.ip - (a.frac < b.frac ? 1 : 0);
  u128 f = a.frac - b.frac;
  if (ip == -1 && f != 0) return -frac_to_double(~f + 1);
  return static_cast<double>(ip) + frac_to_double(f);
}

inline mpz_class to_mpz(u128 v) {
  mpz_class r;
  uint64_t limbs[2] = {static_cast<uint64_t>(v), static_cast<uint64_t>(v >> 64)};
  mpz_import(r.get_mpz_t(), 2, -1, sizeof(uint64_t), 0, 0, limbs);
  return r;
}

// Low 128 bits of a nonnegative integer.
inline u128 low_u128(const mpz_class& z) {
  uint64_t limbs[4] = {0, 0, 0, 0};
  mpz_class m = z;
  if (m < 0) {
    mpz_class mod = mpz_class(1) << 128;
    m %= mod;
    if (m < 0) m += mod;
  }
  size_t count = 0;
  mpz_class low = m & ((mpz_class(1) << 128) - 1);
  mpz_export(limbs, &count, -1, sizeof(uint64_t), 0, 0, low.get_mpz_t());
  return (static_cast<u128>(limbs[1]) << 64) | limbs[0];
}

}  // namespace specflow
