#include "specflow/cfrac.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "specflow/errors.hpp"

namespace specflow {

namespace {

mpz_class ceil_q(const mpq_class& x) {
  mpz_class r;
  mpz_cdiv_q(r.get_mpz_t(), x.get_num_mpz_t(), x.get_den_mpz_t());
  return r;
}

mpz_class ceil_div(const mpz_class& a, const mpz_class& b) {
  mpz_class r;
  mpz_cdiv_q(r.get_mpz_t(), a.get_mpz_t(), b.get_mpz_t());
  return r;
}

mpq_class parse_rational(const json& j) {
  if (j.is_number_integer()) return mpq_class(mpz_class(std::to_string(j.get<long long>())));
  if (j.is_string()) {
    mpq_class q;
    if (q.set_str(j.get<std::string>(), 10) != 0) throw ValidationError("bad rational: " + j.dump());
    q.canonicalize();
    return q;
  }
  throw ValidationError("expected an integer or \"p/q\" string, got " + j.dump());
}

json rational_json(const mpq_class& q) {
  if (q.get_den() == 1 && q.get_num().fits_slong_p()) return q.get_num().get_si();
  return q.get_str();
}

mpz_class parse_integer(const json& j) {
  if (j.is_number_unsigned() || j.is_number_integer()) return mpz_class(std::to_string(j.get<long long>()));
  if (j.is_string()) {
    mpz_class z;
    if (z.set_str(j.get<std::string>(), 10) != 0) throw ValidationError("bad integer: " + j.dump());
    return z;
  }
  throw ValidationError("expected an integer, got " + j.dump());
}

json integer_json(const mpz_class& z) {
  if (z.fits_slong_p()) return z.get_si();
  return z.get_str();
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw ValidationError(std::string(where) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ValidationError(std::string(where) + ": unknown field '" + it.key() + "'");
  }
}

double mpz_ratio(const mpz_class& num, unsigned bits) {
  long e = 0;
  double m = mpz_get_d_2exp(&e, num.get_mpz_t());
  return std::ldexp(m, static_cast<int>(e) - static_cast<int>(bits));
}

}  // namespace

// ---- gamma schedules ----

GammaSchedule GammaSchedule::linear() { return GammaSchedule{}; }

GammaSchedule GammaSchedule::affine(mpq_class slope, mpq_class offset) {
  if (slope <= 0) throw ValidationError("gamma schedule must be increasing");
  GammaSchedule g;
  g.kind_ = Kind::Affine;
  g.slope_ = slope;
  g.offset_ = offset;
  if (g(1) < 1) throw ValidationError("gamma(1) must be at least 1");
  return g;
}

GammaSchedule GammaSchedule::table(std::vector<mpq_class> values) {
  if (values.empty()) throw ValidationError("empty gamma table");
  if (values[0] < 1) throw ValidationError("gamma(1) must be at least 1");
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] <= values[i - 1]) throw ValidationError("gamma table must be strictly increasing");
  GammaSchedule g;
  g.kind_ = Kind::Table;
  g.table_ = std::move(values);
  return g;
}

mpq_class GammaSchedule::operator()(std::size_t n) const {
  if (n == 0) return 1;
  switch (kind_) {
    case Kind::Linear:
      return mpq_class(static_cast<unsigned long>(n + 1));
    case Kind::Affine:
      return slope_ * mpq_class(static_cast<unsigned long>(n)) + offset_;
    case Kind::Table:
      if (n > table_.size())
        throw DepthError("gamma table has " + std::to_string(table_.size()) + " entries, level " +
                         std::to_string(n) + " requested");
      return table_[n - 1];
  }
  return 1;
}

GammaSchedule GammaSchedule::scaled(const mpq_class& factor) const {
  if (factor <= 0) throw ValidationError("scale factor must be positive");
  switch (kind_) {
    case Kind::Linear:
      return affine(factor, factor);
    case Kind::Affine:
      return affine(slope_ * factor, offset_ * factor);
    case Kind::Table: {
      std::vector<mpq_class> v = table_;
      for (auto& x : v) x *= factor;
      return table(v);
    }
  }
  return *this;
}

json GammaSchedule::to_json() const {
  switch (kind_) {
    case Kind::Linear:
      return json{{"kind", "linear"}};
    case Kind::Affine:
      return json{{"kind", "affine"}, {"slope", rational_json(slope_)}, {"offset", rational_json(offset_)}};
    case Kind::Table: {
      json arr = json::array();
      for (const auto& x : table_) arr.push_back(rational_json(x));
      return json{{"kind", "table"}, {"values", arr}};
    }
  }
  return json{};
}

GammaSchedule GammaSchedule::from_json(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "linear") return linear();
    throw ValidationError("unknown gamma schedule '" + j.get<std::string>() + "'");
  }
  reject_unknown(j, {"kind", "slope", "offset", "values"}, "gamma");
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "linear") {
    reject_unknown(j, {"kind"}, "gamma(linear)");
    return linear();
  }
  if (kind == "affine") {
    reject_unknown(j, {"kind", "slope", "offset"}, "gamma(affine)");
    return affine(parse_rational(j.at("slope")), parse_rational(j.at("offset")));
  }
  if (kind == "table") {
    reject_unknown(j, {"kind", "values"}, "gamma(table)");
    std::vector<mpq_class> v;
    for (const auto& x : j.at("values")) v.push_back(parse_rational(x));
    return table(v);
  }
  throw ValidationError("unknown gamma schedule kind '" + kind + "'");
}

// ---- greedy pair generator ----

YoccozGenerator::YoccozGenerator(GammaSchedule gamma, mpz_class a1) : gamma_(std::move(gamma)), a1_(a1) {
  if (a1_ < 1) throw ValidationError("seed quotient a_1 must be positive");
  a_ = {0, a1_};
  b_ = {0};
  q_ = {1, a1_};
  r_ = {1};
}

void YoccozGenerator::extend_to(std::size_t stage) {
  while (stage_ < stage) {
    std::size_t n = stage_ + 1;
    mpq_class g_prev = gamma_(n - 1), g = gamma_(n);
    if (n >= 2 && g <= g_prev) throw ValidationError("gamma schedule is not increasing at level " + std::to_string(n));
    // b_n: least with b_n r_{n-1} + r_{n-2} >= ceil(4 gamma(n-1) gamma(n) q_n)
    mpz_class target_r = ceil_q(mpq_class(4) * g_prev * g * mpq_class(q_[n]));
    mpz_class r_prev2 = n >= 2 ? r_[n - 2] : mpz_class(0);
    mpz_class bn = std::max(mpz_class(1), ceil_div(target_r - r_prev2, r_[n - 1]));
    b_.push_back(bn);
    r_.push_back(bn * r_[n - 1] + r_prev2);
    // a_{n+1}: least with a_{n+1} q_n + q_{n-1} >= ceil(4 gamma(n)^2 r_n)
    mpz_class target_q = ceil_q(mpq_class(4) * g * g * mpq_class(r_[n]));
    mpz_class an = std::max(mpz_class(1), ceil_div(target_q - q_[n - 1], q_[n]));
    a_.push_back(an);
    q_.push_back(an * q_[n] + q_[n - 1]);
    stage_ = n;
  }
}

mpz_class YoccozGenerator::alpha_quotient(std::size_t i) {
  if (i == 0) throw ValidationError("partial quotients are 1-based");
  std::lock_guard<std::mutex> lock(mu_);
  if (i >= 2) extend_to(i - 1);
  return a_[i];
}

mpz_class YoccozGenerator::beta_quotient(std::size_t i) {
  if (i == 0) throw ValidationError("partial quotients are 1-based");
  std::lock_guard<std::mutex> lock(mu_);
  extend_to(i);
  return b_[i];
}

mpz_class YoccozGenerator::q(std::size_t n) {
  std::lock_guard<std::mutex> lock(mu_);
  if (n >= 2) extend_to(n - 1);
  return q_[n];
}

mpz_class YoccozGenerator::r(std::size_t n) {
  std::lock_guard<std::mutex> lock(mu_);
  extend_to(n);
  return r_[n];
}

// ---- partial quotients ----

PartialQuotients PartialQuotients::from_list(std::vector<mpz_class> a) {
  for (const auto& x : a)
    if (x < 1) throw ValidationError("partial quotients must be positive integers");
  PartialQuotients pq;
  pq.kind_ = Kind::Explicit;
  pq.list_ = std::move(a);
  return pq;
}

PartialQuotients PartialQuotients::constant(mpz_class value) {
  if (value < 1) throw ValidationError("partial quotients must be positive integers");
  PartialQuotients pq;
  pq.kind_ = Kind::Constant;
  pq.value_ = value;
  return pq;
}

PartialQuotients PartialQuotients::thue_morse(std::size_t shift) {
  PartialQuotients pq;
  pq.kind_ = Kind::ThueMorse;
  pq.shift_ = shift;
  return pq;
}

PartialQuotients PartialQuotients::yoccoz(std::shared_ptr<YoccozGenerator> gen, bool beta_coordinate) {
  if (!gen) throw ValidationError("null generator");
  PartialQuotients pq;
  pq.kind_ = Kind::Yoccoz;
  pq.gen_ = std::move(gen);
  pq.beta_ = beta_coordinate;
  return pq;
}

mpz_class PartialQuotients::at(std::size_t i) const {
  if (i == 0) throw ValidationError("partial quotients are 1-based");
  switch (kind_) {
    case Kind::Explicit:
      if (i > list_.size())
        throw DepthError("explicit list has " + std::to_string(list_.size()) + " terms, term " + std::to_string(i) +
                         " requested");
      return list_[i - 1];
    case Kind::Constant:
      return value_;
    case Kind::ThueMorse:
      return 1 + (std::popcount(static_cast<unsigned long long>(i - 1 + shift_)) & 1);
    case Kind::Yoccoz:
      return beta_ ? gen_->beta_quotient(i) : gen_->alpha_quotient(i);
  }
  return 1;
}

std::vector<mpz_class> PartialQuotients::prefix(std::size_t n) const {
  std::vector<mpz_class> out;
  out.reserve(n);
  for (std::size_t i = 1; i <= n; ++i) out.push_back(at(i));
  return out;
}

json PartialQuotients::to_json() const {
  switch (kind_) {
    case Kind::Explicit: {
      json arr = json::array();
      for (const auto& x : list_) arr.push_back(integer_json(x));
      return arr;
    }
    case Kind::Constant:
      return json{{"kind", "constant"}, {"params", {{"value", integer_json(value_)}}}};
    case Kind::ThueMorse:
      return json{{"kind", "thue-morse"}, {"params", {{"shift", shift_}}}};
    case Kind::Yoccoz:
      return json{{"kind", "yoccoz"},
                  {"params",
                   {{"gamma", gen_->gamma().to_json()},
                    {"coordinate", beta_ ? "beta" : "alpha"},
                    {"a1", integer_json(gen_->a1())}}}};
  }
  return json{};
}

PartialQuotients PartialQuotients::from_json(const json& j) {
  if (j.is_array()) {
    std::vector<mpz_class> a;
    for (const auto& x : j) a.push_back(parse_integer(x));
    return from_list(a);
  }
  reject_unknown(j, {"kind", "params"}, "partial quotients");
  std::string kind = j.at("kind").get<std::string>();
  json params = j.contains("params") ? j.at("params") : json::object();
  if (kind == "constant") {
    reject_unknown(params, {"value"}, "constant params");
    return constant(params.contains("value") ? parse_integer(params.at("value")) : mpz_class(1));
  }
  if (kind == "thue-morse") {
    reject_unknown(params, {"shift"}, "thue-morse params");
    return thue_morse(params.value("shift", std::size_t{0}));
  }
  if (kind == "yoccoz") {
    reject_unknown(params, {"gamma", "coordinate", "a1"}, "yoccoz params");
    GammaSchedule g = params.contains("gamma") ? GammaSchedule::from_json(params.at("gamma")) : GammaSchedule::linear();
    std::string coord = params.value("coordinate", std::string("alpha"));
    if (coord != "alpha" && coord != "beta") throw ValidationError("yoccoz coordinate must be alpha or beta");
    mpz_class a1 = params.contains("a1") ? parse_integer(params.at("a1")) : mpz_class(1);
    return yoccoz(std::make_shared<YoccozGenerator>(g, a1), coord == "beta");
  }
  throw ValidationError("unknown partial quotient generator '" + kind + "'");
}

bool PartialQuotients::same_source(const PartialQuotients& other) const {
  if (kind_ == Kind::Yoccoz && other.kind_ == Kind::Yoccoz && gen_ == other.gen_) return beta_ == other.beta_;
  return to_json() == other.to_json();
}

// ---- convergents ----

std::vector<Convergent> convergents(const PartialQuotients& pq, std::size_t n) {
  if (!pq.has(n))
    throw DepthError("need " + std::to_string(n) + " partial quotients, source has " + std::to_string(pq.length()));
  std::vector<Convergent> out;
  out.reserve(n + 1);
  out.push_back({0, 0, 1});
  if (n == 0) return out;
  mpz_class a1 = pq.at(1);
  out.push_back({1, 1, a1});
  for (std::size_t k = 2; k <= n; ++k) {
    mpz_class a = pq.at(k);
    out.push_back({k, a * out[k - 1].p + out[k - 2].p, a * out[k - 1].q + out[k - 2].q});
  }
  return out;
}

ApproxCertificate approx_quality(const PartialQuotients& pq, std::size_t n) {
  if (n < 1) throw ValidationError("approx_quality needs n >= 1");
  if (!pq.has(n + 2))
    throw DepthError("enclosing alpha at n = " + std::to_string(n) + " needs " + std::to_string(n + 2) +
                     " partial quotients");
  ApproxCertificate cert;
  if (pq.finite()) {
    // alpha is the rational p_k/q_k itself
    auto c = convergents(pq, pq.length());
    mpq_class alpha(c.back().p, c.back().q);
    mpq_class dist = abs(alpha - mpq_class(c[n].p, c[n].q));
    mpq_class unit(1, c[n].q * c[n + 1].q);
    cert.lower_ok = dist > unit / 2;
    cert.upper_ok = dist < unit;
    return cert;
  }
  auto c = convergents(pq, n + 2);
  mpq_class cn(c[n].p, c[n].q), c1(c[n + 1].p, c[n + 1].q), c2(c[n + 2].p, c[n + 2].q);
  // alpha lies strictly between c_{n+1} and c_{n+2}, and c_{n+2} lies between c_n and c_{n+1}
  mpq_class inner = abs(c2 - cn), outer = abs(c1 - cn);
  mpq_class unit(1, c[n].q * c[n + 1].q);
  cert.lower_ok = inner >= unit / 2;
  cert.upper_ok = outer <= unit;
  return cert;
}

// ---- certified reals ----

RealRep RealRep::from_rational(const mpq_class& x, unsigned bits) {
  mpz_class scaled_num = x.get_num() << bits;
  mpz_class q, r;
  mpz_fdiv_qr(q.get_mpz_t(), r.get_mpz_t(), scaled_num.get_mpz_t(), x.get_den_mpz_t());
  RealRep out;
  out.bits = bits;
  if (2 * r >= x.get_den()) q += 1;
  out.v = q;
  out.err = r == 0 ? 0 : 1;
  return out;
}

RealRep RealRep::from_integer(const mpz_class& n, unsigned bits) { return RealRep{n << bits, 0, bits}; }

double RealRep::value() const { return mpz_ratio(v, bits); }
double RealRep::error() const { return mpz_ratio(err, bits); }

mpq_class RealRep::lower() const {
  mpq_class r(v - err, mpz_class(1) << bits);
  r.canonicalize();
  return r;
}

mpq_class RealRep::upper() const {
  mpq_class r(v + err, mpz_class(1) << bits);
  r.canonicalize();
  return r;
}

RealRep RealRep::operator+(const RealRep& o) const {
  if (bits != o.bits) {
    unsigned b = std::max(bits, o.bits);
    return with_bits(b) + o.with_bits(b);
  }
  return RealRep{v + o.v, err + o.err, bits};
}

RealRep RealRep::operator-(const RealRep& o) const { return *this + (-o); }
RealRep RealRep::operator-() const { return RealRep{-v, err, bits}; }
RealRep RealRep::times(const mpz_class& n) const { return RealRep{v * n, err * abs(n), bits}; }

RealRep RealRep::frac() const {
  mpz_class r;
  mpz_class one = mpz_class(1) << bits;
  mpz_fdiv_r(r.get_mpz_t(), v.get_mpz_t(), one.get_mpz_t());
  return RealRep{r, err, bits};
}

RealRep RealRep::with_bits(unsigned b) const {
  if (b >= bits) return RealRep{v << (b - bits), err << (b - bits), b};
  unsigned d = bits - b;
  mpz_class q;
  mpz_fdiv_q_2exp(q.get_mpz_t(), v.get_mpz_t(), d);
  mpz_class e;
  mpz_cdiv_q_2exp(e.get_mpz_t(), err.get_mpz_t(), d);
  return RealRep{q, e + 1, b};
}

Coord RealRep::to_coord() const {
  RealRep f = frac();
  u128 w;
  double extra = 0.0;
  if (bits > 128) {
    unsigned d = bits - 128;
    mpz_class half = mpz_class(1) << (d - 1);
    mpz_class t = (f.v + half) >> d;
    w = low_u128(t);  // 2^128 wraps to 0, which is the same torus point
    if ((t << d) != f.v) extra = 0x1p-129;
  } else {
    w = low_u128(f.v << (128 - bits));
  }
  return Coord{w, error() + extra};
}

Enclosure enclose(const PartialQuotients& pq, unsigned bits) {
  if (pq.finite()) {
    auto c = convergents(pq, pq.length());
    mpq_class a(c.back().p, c.back().q);
    return {a, a};
  }
  // walk the recurrence until q_n q_{n+1} > 2^(bits+1)
  mpz_class bound = mpz_class(1) << (bits + 1);
  mpz_class p0 = 0, q0 = 1, p1 = 1, q1 = pq.at(1);
  std::size_t k = 1;
  while (q0 * q1 <= bound) {
    mpz_class a = pq.at(++k);
    mpz_class p2 = a * p1 + p0, q2 = a * q1 + q0;
    p0 = p1;
    q0 = q1;
    p1 = p2;
    q1 = q2;
  }
  mpq_class x(p0, q0), y(p1, q1);
  x.canonicalize();
  y.canonicalize();
  return x < y ? Enclosure{x, y} : Enclosure{y, x};
}

RealRep eval_real(const PartialQuotients& pq, unsigned bits) {
  if (bits < 16) throw ValidationError("eval_real needs at least 16 bits");
  Enclosure e = enclose(pq, bits);
  if (pq.finite()) return RealRep::from_rational(e.lo, bits);
  // the midpoint is within 2^-(bits+2) of alpha; rounding adds at most half an ulp
  RealRep out = RealRep::from_rational((e.lo + e.hi) / 2, bits);
  out.err = 1;
  return out;
}

RealRep dist_to_int(const RealRep& x) {
  mpz_class one = mpz_class(1) << x.bits;
  if (4 * x.err >= one) throw PrecisionError("distance to nearest integer: error bound is at least 1/4");
  RealRep f = x.frac();
  if (2 * f.v > one) f.v = one - f.v;
  return f;
}

BoundedPqConstant bounded_pq_constant(const PartialQuotients& pq, std::size_t n_max) {
  if (n_max < 1) throw ValidationError("n_max must be at least 1");
  if (pq.finite()) throw ValidationError("bounded_pq_constant needs an irrational (infinite) source");
  unsigned bits = static_cast<unsigned>(std::ceil(std::log2(static_cast<double>(n_max) + 1))) + 64;
  RealRep alpha = eval_real(pq, bits);
  BoundedPqConstant out;
  RealRep acc = RealRep::from_integer(0, bits);
  for (std::size_t n = 1; n <= n_max; ++n) {
    acc = acc + alpha;
    RealRep d = dist_to_int(acc);
    mpz_class lo = d.v - d.err;
    if (lo <= 0) throw PrecisionError("cannot bound ||n alpha|| away from 0 at n = " + std::to_string(n));
    double c = 1.0 / (static_cast<double>(n) * mpz_ratio(lo, bits));
    if (c > out.C) {
      out.C = c;
      out.argmax = n;
    }
  }
  return out;
}

}  // namespace specflow
