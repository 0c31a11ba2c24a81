#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <thread>

#include "specflow/cfrac.hpp"
#include "specflow/errors.hpp"

using namespace specflow;

namespace {

std::vector<mpz_class> ints(std::initializer_list<int> v) {
  std::vector<mpz_class> out;
  for (int x : v) out.emplace_back(x);
  return out;
}

// straight recurrence on a plain vector, kept apart from the library code
std::vector<mpz_class> oracle_q(const std::vector<int>& a) {
  std::vector<mpz_class> q{1};
  mpz_class prev = 0;
  for (int x : a) {
    mpz_class next = x * q.back() + prev;
    prev = q.back();
    q.push_back(next);
  }
  return q;
}

std::vector<int> thue_morse_word(int n) {
  std::vector<int> w;
  for (int i = 0; i < n; ++i) w.push_back(1 + (__builtin_popcount(i) & 1));
  return w;
}

// floor((sqrt 5 - 1)/2 * 2^bits) via integer square root
mpz_class golden_floor(unsigned bits) {
  mpz_class s;
  mpz_class five = mpz_class(5) << (2 * bits);
  mpz_sqrt(s.get_mpz_t(), five.get_mpz_t());
  return (s - (mpz_class(1) << bits)) / 2;
}

}  // namespace

TEST_CASE("all-ones quotients give Fibonacci denominators") {
  auto c = convergents(PartialQuotients::from_list(ints({1, 1, 1, 1, 1})), 5);
  std::vector<int> q{1, 1, 2, 3, 5, 8};
  for (int i = 0; i <= 5; ++i) CHECK(c[i].q == q[i]);
}

TEST_CASE("initial convergents") {
  auto c = convergents(PartialQuotients::constant(7), 3);
  CHECK(c[0].p == 0);
  CHECK(c[0].q == 1);
  CHECK(c[1].p == 1);
  CHECK(c[1].q == 7);
}

TEST_CASE("thue-morse denominators match a direct recurrence") {
  auto pq = PartialQuotients::thue_morse();
  auto word = thue_morse_word(8);
  CHECK(word == std::vector<int>{1, 2, 2, 1, 2, 1, 1, 2});
  for (int i = 0; i < 8; ++i) CHECK(pq.at(i + 1) == word[i]);
  auto q = oracle_q(word);
  auto c = convergents(pq, 8);
  for (int i = 0; i <= 8; ++i) CHECK(c[i].q == q[i]);
  CHECK(q[8] == 165);
}

TEST_CASE("convergent invariants hold exactly") {
  for (auto pq : {PartialQuotients::thue_morse(), PartialQuotients::constant(1), PartialQuotients::constant(3)}) {
    auto c = convergents(pq, 60);
    for (std::size_t n = 1; n <= 60; ++n) {
      mpz_class det = c[n].p * c[n - 1].q - c[n - 1].p * c[n].q;
      CHECK(det == ((n - 1) % 2 == 0 ? 1 : -1));
      mpz_class g;
      mpz_gcd(g.get_mpz_t(), c[n].p.get_mpz_t(), c[n].q.get_mpz_t());
      CHECK(g == 1);
      if (n >= 2) CHECK(c[n].q > c[n - 1].q);
      CHECK(c[n].q <= (pq.at(n) + 1) * c[n - 1].q);
    }
  }
}

TEST_CASE("explicit lists are finite and reject overreach") {
  auto pq = PartialQuotients::from_list(ints({2, 3}));
  CHECK(pq.finite());
  CHECK_THROWS_AS(convergents(pq, 3), DepthError);
  CHECK_THROWS_AS(PartialQuotients::from_list(ints({1, 0})), ValidationError);
}

TEST_CASE("approximation quality") {
  SUBCASE("golden n = 3 against the exact enclosure") {
    auto pq = PartialQuotients::constant(1);
    auto cert = approx_quality(pq, 3);
    CHECK(cert.lower_ok);
    CHECK(cert.upper_ok);
    // independent enclosure: alpha in (p4/q4, p3/q3) = (3/5, 2/3)
    mpq_class lo(3, 5), hi(2, 3), c3(2, 3);
    CHECK(abs(lo - c3) > mpq_class(1, 30));
  }
  SUBCASE("thue-morse n = 1..40") {
    auto pq = PartialQuotients::thue_morse();
    for (std::size_t n = 1; n <= 40; ++n) {
      auto cert = approx_quality(pq, n);
      CHECK(cert.lower_ok);
      CHECK(cert.upper_ok);
    }
  }
  SUBCASE("depth errors") {
    CHECK_THROWS_AS(approx_quality(PartialQuotients::from_list(ints({1, 2, 3})), 2), DepthError);
    CHECK_THROWS_AS(approx_quality(PartialQuotients::constant(1), 0), ValidationError);
  }
}

TEST_CASE("eval_real") {
  SUBCASE("golden at 64 bits") {
    RealRep r = eval_real(PartialQuotients::constant(1), 64);
    mpz_class truth = golden_floor(128);  // 128-bit oracle
    mpq_class exact(truth, mpz_class(1) << 128);
    mpq_class diff = abs(mpq_class(r.v, mpz_class(1) << 64) - exact);
    CHECK(diff <= mpq_class(1, mpz_class(1) << 64));
    CHECK(r.err <= 1);
  }
  SUBCASE("finite list is the exact rational") {
    RealRep r = eval_real(PartialQuotients::from_list(ints({2})), 64);
    CHECK(r.err == 0);
    CHECK(r.v == (mpz_class(1) << 63));
  }
  SUBCASE("thue-morse enclosure at 128 bits") {
    auto pq = PartialQuotients::thue_morse();
    RealRep r = eval_real(pq, 128);
    Enclosure e = enclose(pq, 128);
    CHECK(e.hi - e.lo < mpq_class(1, mpz_class(1) << 128));
    CHECK(r.lower() <= e.lo);
    CHECK(r.upper() >= e.hi);
    // deep convergents bracket the value
    auto c = convergents(pq, 120);
    mpq_class a(c[119].p, c[119].q), b(c[120].p, c[120].q);
    mpq_class lo = std::min(a, b), hi = std::max(a, b);
    CHECK(r.upper() >= lo);
    CHECK(r.lower() <= hi);
  }
  SUBCASE("two precisions agree") {
    auto pq = PartialQuotients::thue_morse(1);
    RealRep a = eval_real(pq, 80), b = eval_real(pq, 200);
    CHECK(abs(mpq_class(a.v, mpz_class(1) << 80) - mpq_class(b.v, mpz_class(1) << 200)) <=
          mpq_class(2, mpz_class(1) << 80));
  }
  CHECK_THROWS_AS(eval_real(PartialQuotients::constant(1), 8), ValidationError);
}

TEST_CASE("dist_to_int") {
  RealRep q = RealRep::from_rational(mpq_class(1, 4), 32);
  CHECK(dist_to_int(q).value() == doctest::Approx(0.25));
  CHECK(dist_to_int(RealRep::from_rational(mpq_class(3, 4), 32)).value() == doctest::Approx(0.25));
  auto pq = PartialQuotients::constant(1);
  auto c = convergents(pq, 8);
  RealRep x = eval_real(pq, 64).times(c[5].q);
  RealRep d = dist_to_int(x);
  CHECK(d.lower() < mpq_class(1, c[6].q));
  RealRep bad = q;
  bad.err = mpz_class(1) << 30;
  CHECK_THROWS_AS(dist_to_int(bad), PrecisionError);
}

TEST_CASE("bounded partial quotient constant") {
  auto golden = PartialQuotients::constant(1);
  auto c100 = bounded_pq_constant(golden, 100);
  CHECK(c100.C <= 3.0);
  CHECK(c100.C > 2.0);
  auto one = bounded_pq_constant(golden, 1);
  double alpha = (std::sqrt(5.0) - 1) / 2;
  CHECK(one.C == doctest::Approx(1.0 / std::min(alpha, 1 - alpha)).epsilon(1e-12));
  auto tm = PartialQuotients::thue_morse();
  double a = bounded_pq_constant(tm, 10000).C, b = bounded_pq_constant(tm, 20000).C;
  CHECK(std::isfinite(a));
  CHECK(b < 1.1 * a);
  CHECK_THROWS_AS(bounded_pq_constant(PartialQuotients::from_list(ints({1, 2})), 10), ValidationError);
}

TEST_CASE("generator reads are deterministic and thread safe") {
  auto gen = std::make_shared<YoccozGenerator>(GammaSchedule::linear());
  auto pq = PartialQuotients::yoccoz(gen, false);
  std::vector<std::vector<mpz_class>> seen(4);
  std::vector<std::thread> pool;
  for (int t = 0; t < 4; ++t) pool.emplace_back([&, t] { seen[t] = pq.prefix(6); });
  for (auto& t : pool) t.join();
  for (int t = 1; t < 4; ++t) CHECK(seen[t] == seen[0]);
  CHECK(pq.prefix(6) == seen[0]);
}

TEST_CASE("descriptor round trip") {
  for (auto pq : {PartialQuotients::from_list(ints({1, 2, 3})), PartialQuotients::constant(2),
                  PartialQuotients::thue_morse(1),
                  PartialQuotients::yoccoz(std::make_shared<YoccozGenerator>(GammaSchedule::linear()), true)}) {
    auto back = PartialQuotients::from_json(pq.to_json());
    CHECK(back.to_json() == pq.to_json());
    CHECK(back.prefix(3) == pq.prefix(3));
  }
  CHECK_THROWS_AS(PartialQuotients::from_json(json{{"kind", "constant"}, {"bogus", 1}}), ValidationError);
  CHECK_THROWS_AS(PartialQuotients::from_json(json{{"kind", "nope"}}), ValidationError);
}
