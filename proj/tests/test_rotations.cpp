#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "specflow/errors.hpp"
#include "specflow/rng.hpp"
#include "specflow/rotations.hpp"

using namespace specflow;

namespace {

bool brute_palindrome(const std::vector<int>& w, std::size_t len) {
  std::vector<int> pre(w.begin(), w.begin() + len);
  std::vector<int> rev(pre.rbegin(), pre.rend());
  return pre == rev;
}

mpz_class denom(const std::vector<int>& c, std::size_t k) {
  mpz_class q0 = 1, q1 = c[0];
  if (k == 0) return q0;
  for (std::size_t i = 1; i < k; ++i) {
    mpz_class q2 = c[i] * q1 + q0;
    q0 = q1;
    q1 = q2;
  }
  return q1;
}

}  // namespace

TEST_CASE("thue-morse symbols") {
  CHECK(thue_morse_symbols(8) == std::vector<int>{1, 2, 2, 1, 2, 1, 1, 2});
  CHECK(thue_morse_symbols(1) == std::vector<int>{1});
  CHECK_THROWS_AS(thue_morse_symbols(0), ValidationError);
}

TEST_CASE("palindromic prefixes match a brute-force scan") {
  auto pair = palindromic_pair(64);
  std::vector<std::size_t> oracle;
  for (std::size_t len = 1; len <= 64; ++len)
    if (brute_palindrome(pair.symbols, len)) oracle.push_back(len);
  CHECK(pair.palindromic_prefix_lengths == oracle);
  CHECK(oracle == std::vector<std::size_t>{1, 4, 16, 64});
  CHECK_FALSE(pair.no_palindrome_warning);
}

TEST_CASE("common denominators by two independent recurrences") {
  auto pair = palindromic_pair(64);
  std::vector<int> shifted(pair.symbols.begin() + 1, pair.symbols.end());
  REQUIRE(pair.common_denominators.size() == pair.palindromic_prefix_lengths.size());
  for (std::size_t i = 0; i < pair.common_denominators.size(); ++i) {
    std::size_t k = pair.palindromic_prefix_lengths[i] - 1;
    CHECK(denom(pair.symbols, k) == pair.common_denominators[i]);
    CHECK(denom(shifted, k) == pair.common_denominators[i]);
  }
  CHECK(pair.common_denominators[1] == 7);
  CHECK(pair.common_denominators[2] == 22020);
  // beta's expansion starts at the second symbol
  CHECK(pair.rotation.beta.prefix(4) == std::vector<mpz_class>{2, 2, 1, 2});
}

TEST_CASE("yoccoz pair growth inequalities") {
  auto pair = yoccoz_pair(GammaSchedule::linear(), 4);
  auto gamma = [](std::size_t n) { return mpq_class(static_cast<long>(n == 0 ? 1 : n + 1)); };
  for (std::size_t n = 1; n <= 4; ++n) {
    CHECK(pair.first_ok[n - 1]);
    CHECK(pair.second_ok[n - 1]);
    // direct comparison, plus minimality of the greedy quotient
    CHECK(mpq_class(4) * gamma(n - 1) * gamma(n) * mpq_class(pair.q[n]) <= mpq_class(pair.r[n]));
    CHECK(mpq_class(4) * gamma(n) * gamma(n) * mpq_class(pair.r[n]) <= mpq_class(pair.q[n + 1]));
    mpz_class r_prev2 = n >= 2 ? pair.r[n - 2] : mpz_class(0);
    mpz_class r_smaller = pair.r[n] - pair.r[n - 1];
    if (pair.beta_pq.at(n) > 1)
      CHECK(mpq_class(4) * gamma(n - 1) * gamma(n) * mpq_class(pair.q[n]) > mpq_class(r_smaller));
    (void)r_prev2;
  }
  CHECK(pair.beta_pq.at(1) == 8);
  CHECK(pair.r[1] == 8);
  CHECK(pair.q[2] == 128);
  CHECK(pair.r[2] == 3073);
}

TEST_CASE("doubling gamma never decreases a quotient") {
  auto base = yoccoz_pair(GammaSchedule::linear(), 3);
  auto twice = yoccoz_pair(GammaSchedule::linear().scaled(2), 3);
  for (std::size_t i = 1; i <= 3; ++i) {
    CHECK(twice.beta_pq.at(i) >= base.beta_pq.at(i));
    CHECK(twice.alpha_pq.at(i + 1) >= base.alpha_pq.at(i + 1));
  }
  CHECK_THROWS_AS(yoccoz_pair(GammaSchedule::linear(), 0), ValidationError);
}

TEST_CASE("ergodicity search") {
  auto same = RotationVector2::make(PartialQuotients::constant(1), PartialQuotients::constant(1), 128);
  auto cert = ergodicity_check(same, 1, 128);
  CHECK(cert.relation_found);
  CHECK(cert.k == -cert.l);
  CHECK(cert.m == 0);

  auto pal = palindromic_pair(64);
  CHECK_FALSE(ergodicity_check(pal.rotation, 50, 192).relation_found);

  auto yp = yoccoz_pair(GammaSchedule::linear(), 4);
  auto c1 = ergodicity_check(yp.rotation, 50, 256);
  CHECK_FALSE(c1.relation_found);
  // doubled precision gives the same verdict and a consistent separation
  auto c2 = ergodicity_check(yp.rotation, 50, 512);
  CHECK_FALSE(c2.relation_found);
  CHECK(c2.min_separation == doctest::Approx(c1.min_separation).epsilon(1e-6));
}

TEST_CASE("orbit points") {
  auto rot = RotationVector2::make(PartialQuotients::constant(1), PartialQuotients::constant(2), 192);
  TorusPoint p = torus_point(0.3, 0.7);
  SUBCASE("n = 0 is exact") {
    auto o = orbit_point(rot, p, 0);
    CHECK(o.x.v == p.x.v);
    CHECK(o.y.v == p.y.v);
  }
  SUBCASE("return near x0 at a denominator") {
    auto c = convergents(rot.alpha, 20);
    for (std::size_t k = 3; k < 20; ++k) {
      auto o = orbit_point(rot, p, c[k].q.get_si());
      CHECK(circle_dist(o.x.v - p.x.v) < 1.0 / c[k + 1].q.get_d());
    }
  }
  SUBCASE("composition") {
    Philox rng(7, 0);
    for (int i = 0; i < 200; ++i) {
      int64_t n = static_cast<int64_t>(rng.uniform(-1e6, 1e6)), m = static_cast<int64_t>(rng.uniform(-1e6, 1e6));
      auto a = orbit_point(rot, orbit_point(rot, p, n), m);
      auto b = orbit_point(rot, p, n + m);
      CHECK(circle_dist(a.x.v - b.x.v) <= a.x.err + b.x.err);
      CHECK(circle_dist(a.y.v - b.y.v) <= a.y.err + b.y.err);
    }
  }
  SUBCASE("error bounds are honest at half precision") {
    auto low = RotationVector2::make(PartialQuotients::constant(1), PartialQuotients::constant(2), 96);
    for (int64_t n : {1LL, 1000LL, -77777LL, 10000000LL}) {
      auto a = orbit_point(rot, p, n), b = orbit_point(low, p, n);
      CHECK(circle_dist(a.x.v - b.x.v) <= a.x.err + b.x.err);
      CHECK(circle_dist(a.y.v - b.y.v) <= a.y.err + b.y.err);
      // coordinates are stored at 128 bits, so the additive term is one 128-bit rounding
      CHECK(a.x.err <= std::abs(static_cast<double>(n)) * std::ldexp(1.0, -191) + std::ldexp(1.0, -128));
      CHECK(b.x.err <= std::abs(static_cast<double>(n)) * std::ldexp(1.0, -95) + std::ldexp(1.0, -96));
    }
  }
  SUBCASE("big index agrees with machine index") {
    auto a = orbit_point(rot, p, 123456789), b = orbit_point_big(rot, p, mpz_class(123456789));
    CHECK(circle_dist(a.x.v - b.x.v) <= a.x.err + b.x.err);
  }
  CHECK_THROWS_AS(RotationVector2::make(PartialQuotients::from_list({1, 2}), PartialQuotients::constant(1), 128),
                  ValidationError);
}

TEST_CASE("rotation descriptor round trip") {
  auto rot = RotationVector2::make(PartialQuotients::thue_morse(0), PartialQuotients::thue_morse(1), 160);
  auto back = RotationVector2::from_json(rot.to_json());
  CHECK(back.to_json() == rot.to_json());
  CHECK(back.alpha_c.v == rot.alpha_c.v);
  CHECK_THROWS_AS(RotationVector2::from_json(json{{"alpha", 1}}), ValidationError);
}

TEST_CASE("philox known answer") {
  // Philox4x32-10 with zero counter and key
  Philox g(0, 0);
  uint64_t a = g.next_u64(), b = g.next_u64();
  CHECK(static_cast<uint32_t>(a) == 0x6627e8d5u);
  CHECK(static_cast<uint32_t>(a >> 32) == 0xe169c58du);
  CHECK(static_cast<uint32_t>(b) == 0xbc57ac4cu);
  CHECK(static_cast<uint32_t>(b >> 32) == 0x9b00dbd8u);
  Philox s1(5, 3), s2(5, 3), s3(5, 4);
  CHECK(s1.next_u64() == s2.next_u64());
  CHECK(s1.next_u64() != s3.next_u64());
}
