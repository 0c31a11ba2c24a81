#pragma once

#include <gmpxx.h>

#include <cstddef>
#include <memory>
#include <mutex>
#include <json.hpp>
#include <vector>

#include "specflow/fixed.hpp"

namespace specflow {

using json = nlohmann::json;

// Increasing rational schedule gamma(n), n >= 1, with gamma(0) := 1.
class GammaSchedule {
 public:
  enum class Kind { Linear, Affine, Table };

  static GammaSchedule linear();  // n + 1
  static GammaSchedule affine(mpq_class slope, mpq_class offset);
  static GammaSchedule table(std::vector<mpq_class> values);  // gamma(1), gamma(2), ...

  mpq_class operator()(std::size_t n) const;
  GammaSchedule scaled(const mpq_class& factor) const;  // pointwise multiple (gamma(0) stays 1)

  json to_json() const;
  static GammaSchedule from_json(const json& j);

 private:
  Kind kind_ = Kind::Linear;
  mpq_class slope_ = 1, offset_ = 1;
  std::vector<mpq_class> table_;
};

// Greedy-minimal construction of a pair whose denominators satisfy
//   4 gamma(n-1) gamma(n) q_n <= r_n   and   4 gamma(n)^2 r_n <= q_{n+1}.
// Stages are produced lazily and cached; access is thread-safe.
class YoccozGenerator {
 public:
  explicit YoccozGenerator(GammaSchedule gamma, mpz_class a1 = 1);

  mpz_class alpha_quotient(std::size_t i);  // a_i, i >= 1
  mpz_class beta_quotient(std::size_t i);   // b_i, i >= 1
  mpz_class q(std::size_t n);               // alpha denominators, q_0 = 1
  mpz_class r(std::size_t n);               // beta denominators, r_0 = 1
  const GammaSchedule& gamma() const { return gamma_; }
  const mpz_class& a1() const { return a1_; }

 private:
  void extend_to(std::size_t stage);  // caller holds mu_

  GammaSchedule gamma_;
  mpz_class a1_;
  std::mutex mu_;
  std::vector<mpz_class> a_, b_, q_, r_;  // index 0 is padding for a, b
  std::size_t stage_ = 0;
};

// Source of partial quotients a_1, a_2, ...
class PartialQuotients {
 public:
  enum class Kind { Explicit, Constant, ThueMorse, Yoccoz };

  static PartialQuotients from_list(std::vector<mpz_class> a);
  static PartialQuotients constant(mpz_class value);
  // a_i = 1 + (number of ones in binary of i - 1 + shift) mod 2
  static PartialQuotients thue_morse(std::size_t shift = 0);
  static PartialQuotients yoccoz(std::shared_ptr<YoccozGenerator> gen, bool beta_coordinate);

  Kind kind() const { return kind_; }
  bool finite() const { return kind_ == Kind::Explicit; }
  std::size_t length() const { return list_.size(); }  // explicit lists only
  mpz_class at(std::size_t i) const;                     // 1-based; DepthError past the end
  std::vector<mpz_class> prefix(std::size_t n) const;
  bool has(std::size_t n) const { return !finite() || n <= list_.size(); }

  json to_json() const;
  static PartialQuotients from_json(const json& j);
  bool same_source(const PartialQuotients& other) const;

 private:
  Kind kind_ = Kind::Explicit;
  std::vector<mpz_class> list_;
  mpz_class value_ = 1;
  std::size_t shift_ = 0;
  std::shared_ptr<YoccozGenerator> gen_;
  bool beta_ = false;
};

struct Convergent {
  std::size_t n = 0;
  mpz_class p, q;
};

// (p_0, q_0) = (0, 1), (p_1, q_1) = (1, a_1), then the usual recurrence.
std::vector<Convergent> convergents(const PartialQuotients& pq, std::size_t n);

struct ApproxCertificate {
  bool lower_ok = false;  // |alpha - p_n/q_n| > 1/(2 q_n q_{n+1})
  bool upper_ok = false;  // |alpha - p_n/q_n| < 1/(q_n q_{n+1})
};

ApproxCertificate approx_quality(const PartialQuotients& pq, std::size_t n);

// Fixed point real v / 2^bits with absolute error err / 2^bits.
struct RealRep {
  mpz_class v;
  mpz_class err;
  unsigned bits = 0;

  static RealRep from_rational(const mpq_class& x, unsigned bits);
  static RealRep from_integer(const mpz_class& n, unsigned bits);

  double value() const;
  double error() const;
  mpq_class lower() const;
  mpq_class upper() const;

  RealRep operator+(const RealRep& o) const;
  RealRep operator-(const RealRep& o) const;
  RealRep operator-() const;
  RealRep times(const mpz_class& n) const;
  RealRep frac() const;                  // value reduced into [0, 1)
  RealRep with_bits(unsigned b) const;   // rescale, widening the error on truncation
  // Fractional part as a 128-bit coordinate. The error includes the rounding.
  Coord to_coord() const;
};

// Rational interval around alpha of width below 2^-(bits+1), from two
// consecutive convergents (alpha lies between them).
struct Enclosure {
  mpq_class lo, hi;
};
Enclosure enclose(const PartialQuotients& pq, unsigned bits);

RealRep eval_real(const PartialQuotients& pq, unsigned bits);
RealRep dist_to_int(const RealRep& x);

struct BoundedPqConstant {
  double C = 0;            // max over n of 1 / (n ||n alpha||), upper estimate
  std::size_t argmax = 0;  // n attaining it
};

BoundedPqConstant bounded_pq_constant(const PartialQuotients& pq, std::size_t n_max);

}  // namespace specflow
