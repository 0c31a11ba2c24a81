#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "specflow/cfrac.hpp"
#include "specflow/fixed.hpp"

namespace specflow {

struct ErgodicityCertificate {
  unsigned K = 0;
  unsigned bits = 0;
  bool relation_found = false;
  // populated when a relation was found: |k alpha + l beta - m| within the error margin
  long k = 0, l = 0;
  mpz_class m = 0;
  double residual = 0;
  double min_separation = 0;  // smallest certified |k alpha + l beta - m| over the search box
  std::string verdict() const { return relation_found ? "relation-found" : "no-relation-found"; }
};

// T(x, y) = (x + alpha, y + beta) with certified reals at a working precision.
struct RotationVector2 {
  PartialQuotients alpha, beta;
  RealRep alpha_real, beta_real;
  unsigned bits = 0;
  std::optional<ErgodicityCertificate> ergodicity;

  static RotationVector2 make(PartialQuotients alpha, PartialQuotients beta, unsigned bits);

  // Per-step translations as 128-bit fractions; err covers the real's error plus rounding.
  Coord alpha_step() const { return alpha_c; }
  Coord beta_step() const { return beta_c; }

  json to_json() const;
  static RotationVector2 from_json(const json& j, unsigned default_bits = 192);

  Coord alpha_c, beta_c;
};

// Default working precision for orbits of length up to n_max.
unsigned precision_for(uint64_t n_max);

std::vector<int> thue_morse_symbols(std::size_t n);

struct PalindromicPair {
  std::vector<int> symbols;
  std::vector<std::size_t> palindromic_prefix_lengths;  // k + 1 for each detected palindrome a_1..a_{k+1}
  std::vector<mpz_class> common_denominators;           // q_k(alpha) = q_k(beta)
  bool no_palindrome_warning = false;
  // the word is assumed not eventually periodic (true for Thue-Morse)
  std::string assumption = "symbol word not eventually periodic (Thue-Morse)";
  RotationVector2 rotation;
};

PalindromicPair palindromic_pair(std::size_t n_terms, unsigned bits = 192);

struct YoccozPair {
  GammaSchedule gamma;
  std::size_t levels = 0;
  PartialQuotients alpha_pq, beta_pq;
  std::vector<mpz_class> q;  // q_0 .. q_{levels+1}
  std::vector<mpz_class> r;  // r_0 .. r_{levels+1}
  std::vector<bool> first_ok, second_ok;  // the two growth inequalities per level 1..levels
  RotationVector2 rotation;
};

YoccozPair yoccoz_pair(const GammaSchedule& gamma, std::size_t levels, mpz_class a1 = 1, unsigned bits = 256);

// Bounded search for k alpha + l beta = m with 0 < |k|, |l| <= K.
ErgodicityCertificate ergodicity_check(const RotationVector2& rot, unsigned K, unsigned bits);

// ({x0 + n alpha}, {y0 + n beta}) with propagated error.
TorusPoint orbit_point(const RotationVector2& rot, const TorusPoint& p, int64_t n);

// Exact orbit for huge n using the certified reals at the rotation's precision.
TorusPoint orbit_point_big(const RotationVector2& rot, const TorusPoint& p, const mpz_class& n);

}  // namespace specflow
