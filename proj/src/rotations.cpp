#include "specflow/rotations.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

#include "specflow/errors.hpp"

namespace specflow {

RotationVector2 RotationVector2::make(PartialQuotients alpha, PartialQuotients beta, unsigned bits) {
  if (alpha.finite() || beta.finite())
    throw ValidationError("rotation coordinates must be irrational; finite partial quotient lists are rationals");
  if (bits < 64) throw ValidationError("rotation precision must be at least 64 bits");
  RotationVector2 rot;
  rot.alpha = std::move(alpha);
  rot.beta = std::move(beta);
  rot.bits = bits;
  rot.alpha_real = eval_real(rot.alpha, bits);
  rot.beta_real = eval_real(rot.beta, bits);
  rot.alpha_c = rot.alpha_real.to_coord();
  rot.beta_c = rot.beta_real.to_coord();
  return rot;
}

json RotationVector2::to_json() const {
  return json{{"alpha", alpha.to_json()}, {"beta", beta.to_json()}, {"precision_bits", bits}};
}

RotationVector2 RotationVector2::from_json(const json& j, unsigned default_bits) {
  if (!j.is_object()) throw ValidationError("rotation: expected an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "alpha" && it.key() != "beta" && it.key() != "precision_bits")
      throw ValidationError("rotation: unknown field '" + it.key() + "'");
  if (!j.contains("alpha") || !j.contains("beta")) throw ValidationError("rotation: alpha and beta are required");
  unsigned bits = j.value("precision_bits", default_bits);
  return make(PartialQuotients::from_json(j.at("alpha")), PartialQuotients::from_json(j.at("beta")), bits);
}

unsigned precision_for(uint64_t n_max) {
  return static_cast<unsigned>(std::ceil(std::log2(static_cast<double>(n_max) + 1.0))) + 64;
}

std::vector<int> thue_morse_symbols(std::size_t n) {
  if (n < 1) throw ValidationError("thue_morse_symbols needs n >= 1");
  std::vector<int> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = 1 + (std::popcount(static_cast<unsigned long long>(i)) & 1);
  return s;
}

namespace {

bool is_palindrome(const std::vector<int>& s, std::size_t len) {
  for (std::size_t i = 0, j = len - 1; i < j; ++i, --j)
    if (s[i] != s[j]) return false;
  return true;
}

// q_0..q_n for quotients c_1..c_n
std::vector<mpz_class> denominators(const std::vector<int>& c, std::size_t offset, std::size_t n) {
  std::vector<mpz_class> q(n + 1);
  q[0] = 1;
  if (n >= 1) q[1] = c[offset];
  for (std::size_t k = 2; k <= n; ++k) q[k] = c[offset + k - 1] * q[k - 1] + q[k - 2];
  return q;
}

}  // namespace

PalindromicPair palindromic_pair(std::size_t n_terms, unsigned bits) {
  if (n_terms < 3) throw ValidationError("palindromic_pair needs n_terms >= 3");
  PalindromicPair out;
  out.symbols = thue_morse_symbols(n_terms);
  out.rotation = RotationVector2::make(PartialQuotients::thue_morse(0), PartialQuotients::thue_morse(1), bits);
  // alpha uses a_1..a_k, beta uses a_2..a_{k+1}
  auto qa = denominators(out.symbols, 0, n_terms);
  auto qb = denominators(out.symbols, 1, n_terms - 1);
  for (std::size_t len = 1; len <= n_terms; ++len) {
    if (!is_palindrome(out.symbols, len)) continue;
    std::size_t k = len - 1;
    if (qa[k] != qb[k])
      throw std::logic_error("palindromic prefix of length " + std::to_string(len) + " without common denominator");
    out.palindromic_prefix_lengths.push_back(len);
    out.common_denominators.push_back(qa[k]);
  }
  out.no_palindrome_warning = out.common_denominators.empty();
  return out;
}

YoccozPair yoccoz_pair(const GammaSchedule& gamma, std::size_t levels, mpz_class a1, unsigned bits) {
  if (levels < 1) throw ValidationError("yoccoz_pair needs levels >= 1");
  for (std::size_t n = 2; n <= levels + 1; ++n)
    if (gamma(n) <= gamma(n - 1)) throw ValidationError("gamma schedule must be strictly increasing");
  if (gamma(1) < 1) throw ValidationError("gamma(1) must be at least 1");
  auto gen = std::make_shared<YoccozGenerator>(gamma, a1);
  YoccozPair out;
  out.gamma = gamma;
  out.levels = levels;
  out.alpha_pq = PartialQuotients::yoccoz(gen, false);
  out.beta_pq = PartialQuotients::yoccoz(gen, true);
  for (std::size_t n = 0; n <= levels + 1; ++n) {
    out.q.push_back(gen->q(n));
    out.r.push_back(gen->r(n));
  }
  for (std::size_t n = 1; n <= levels; ++n) {
    mpq_class g_prev = gamma(n - 1), g = gamma(n);
    out.first_ok.push_back(mpq_class(4) * g_prev * g * mpq_class(out.q[n]) <= mpq_class(out.r[n]));
    out.second_ok.push_back(mpq_class(4) * g * g * mpq_class(out.r[n]) <= mpq_class(out.q[n + 1]));
  }
  out.rotation = RotationVector2::make(out.alpha_pq, out.beta_pq, bits);
  return out;
}

namespace {

enum class Separation { Separated, Unresolved };

struct Probe {
  Separation sep;
  mpz_class m;
  double residual;
  double margin;
};

Probe probe(const RealRep& a, const RealRep& b, long k, long l) {
  RealRep v = a.times(k) + b.times(l);
  mpz_class one = mpz_class(1) << v.bits;
  mpz_class m;
  mpz_class shifted = v.v + (one >> 1);
  mpz_fdiv_q_2exp(m.get_mpz_t(), shifted.get_mpz_t(), v.bits);
  mpz_class res = abs(v.v - (m << v.bits));
  Probe p;
  p.m = m;
  p.residual = mpq_class(res, one).get_d();
  p.margin = mpq_class(v.err, one).get_d();
  p.sep = res > v.err ? Separation::Separated : Separation::Unresolved;
  return p;
}

}  // namespace

ErgodicityCertificate ergodicity_check(const RotationVector2& rot, unsigned K, unsigned bits) {
  if (K < 1) throw ValidationError("ergodicity_check needs K >= 1");
  if (std::ldexp(static_cast<double>(K) * (std::fabs(rot.alpha_real.value()) + std::fabs(rot.beta_real.value()) + 1.0),
                 -static_cast<int>(bits)) >= 0.5)
    throw ValidationError("precision too low for the requested search bound");
  ErgodicityCertificate cert;
  cert.K = K;
  cert.bits = bits;
  cert.min_separation = INFINITY;
  RealRep a = eval_real(rot.alpha, bits), b = eval_real(rot.beta, bits);
  bool same = rot.alpha.same_source(rot.beta);
  // search rings of growing max(|k|, |l|); l > 0 covers both signs of the pair
  for (long ring = 1; ring <= static_cast<long>(K); ++ring) {
    for (long l = 1; l <= ring; ++l) {
      for (long k = -ring; k <= ring; ++k) {
        if (k == 0 || std::max(std::labs(k), l) != ring) continue;
        Probe p = probe(a, b, k, l);
        for (unsigned scale = 2; p.sep == Separation::Unresolved && scale <= 4; scale *= 2) {
          p = probe(eval_real(rot.alpha, bits * scale), eval_real(rot.beta, bits * scale), k, l);
        }
        if (p.sep == Separation::Separated) {
          cert.min_separation = std::min(cert.min_separation, p.residual - p.margin);
          continue;
        }
        if (same && k == -l) {
          cert.relation_found = true;
          cert.k = k;
          cert.l = l;
          cert.m = p.m;
          cert.residual = p.residual;
          return cert;
        }
        throw PrecisionError("cannot separate k alpha + l beta - m from 0 at (k, l, m) = (" + std::to_string(k) + ", " +
                             std::to_string(l) + ", " + p.m.get_str() + ")");
      }
    }
  }
  return cert;
}

TorusPoint orbit_point(const RotationVector2& rot, const TorusPoint& p, int64_t n) {
  // scale the certified reals exactly, then round once to 128 bits
  return orbit_point_big(rot, p, mpz_class(std::to_string(n)));
}

TorusPoint orbit_point_big(const RotationVector2& rot, const TorusPoint& p, const mpz_class& n) {
  Coord ax = rot.alpha_real.times(n).to_coord();
  Coord by = rot.beta_real.times(n).to_coord();
  TorusPoint out{{p.x.v + ax.v, p.x.err + ax.err}, {p.y.v + by.v, p.y.err + by.err}};
  if (out.x.err > 0x1p-20 || out.y.err > 0x1p-20)
    throw PrecisionError("orbit error bound exceeds 2^-20 at n = " + n.get_str());
  return out;
}

}  // namespace specflow
