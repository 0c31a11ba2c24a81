#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "specflow/errors.hpp"
#include "specflow/fayad.hpp"

using namespace specflow;

namespace {

const YoccozPair& pair4() {
  static YoccozPair p = yoccoz_pair(GammaSchedule::linear(), 4);
  return p;
}

RoofSpec sawtooth() {
  RoofSpec s;
  s.c0 = 3;
  s.x_jumps = {{1, 0}};
  s.y_jumps = {{2, 0}};
  return s;
}

RoofSpec smooth() {
  RoofSpec s = sawtooth();
  s.trig = {{1, 0, 0.05, 0}, {0, 1, 0, 0.05}};
  return s;
}

// kept cells by direct sort of 512-bit translates, exact filter
std::vector<mpz_class> oracle_starts(const PartialQuotients& pq, long J, const mpq_class& g, const mpz_class& q) {
  const unsigned W = 512;
  mpz_class one = mpz_class(1) << W;
  RealRep a = eval_real(pq, W).frac();
  std::vector<mpz_class> pts;
  for (long j = 0; j < J; ++j) {
    mpz_class v = -a.v * j;
    mpz_mod(v.get_mpz_t(), v.get_mpz_t(), one.get_mpz_t());
    pts.push_back(v);
  }
  std::sort(pts.begin(), pts.end());
  std::vector<mpz_class> kept;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    mpz_class len = (i + 1 < pts.size() ? pts[i + 1] : pts[0] + one) - pts[i];
    if (mpq_class(len * len, one * one) * g * q * q > 1) kept.push_back(pts[i] >> (W - 128));
  }
  return kept;
}

}  // namespace

TEST_CASE("partition bounds at level 2") {
  auto f = RoofFunction::build(sawtooth(), pair4().rotation);
  auto parts = fayad_partitions(f, pair4(), 2);
  CHECK(parts.even.translates == 36992);
  CHECK(parts.odd.translates == 1773121);
  CHECK(parts.even.max_length < 2.0 / 128);
  CHECK(parts.odd.max_length < 2.0 / 3073);
  CHECK(parts.even.mass >= 1 - 2 / std::sqrt(3.0));
  CHECK(parts.odd.mass >= 1 - 2 / std::sqrt(3.0));
  CHECK(parts.even.mass_ok);
  CHECK(parts.odd.length_ok);
  for (std::size_t i = 0; i < parts.even.size(); ++i) CHECK(parts.even.cell_length(i) > parts.even.threshold);
}

TEST_CASE("partition at a tiny level matches a brute-force sort") {
  auto f = RoofFunction::build(sawtooth(), pair4().rotation);
  auto parts = fayad_partitions(f, pair4(), 1);
  const auto& P = pair4();
  // J = q_1 ceil(q_2 / (gamma(1) q_1)) = 64, J' = r_1 ceil(r_2 / (gamma(1) r_1)) = 1544
  CHECK(parts.even.translates == 64);
  CHECK(parts.odd.translates == 1544);
  auto ex = oracle_starts(P.alpha_pq, 64, 2, P.q[1]);
  auto ey = oracle_starts(P.beta_pq, 1544, 2, P.r[1]);
  REQUIRE(ex.size() == parts.even.size());
  REQUIRE(ey.size() == parts.odd.size());
  for (std::size_t i = 0; i < ex.size(); ++i) CHECK(abs(ex[i] - to_mpz(parts.even.start[i])) <= 1);
  for (std::size_t i = 0; i < ey.size(); ++i) CHECK(abs(ey[i] - to_mpz(parts.odd.start[i])) <= 1);
}

TEST_CASE("sawtooth roof: stretch chain and trivial curvature") {
  auto f = RoofFunction::build(sawtooth(), pair4().rotation);
  auto db = derivative_bounds(f, 100, 8);
  auto rep = fayad_check(f, pair4(), db, 2, 20, 10, 3, 5);
  CHECK(rep.even.window_ok);
  CHECK(rep.odd.window_ok);
  CHECK(rep.even.k == doctest::Approx(std::sqrt(3.0)));
  for (const auto& pr : rep.probes) {
    double g = 3, q = pr.level % 2 == 0 ? 128 : 3073;
    CHECK(pr.inf_lower * pr.cell_length >= rep.theta * pr.m / (std::sqrt(g) * q) - 1e-9);
    CHECK(pr.second_upper == 0);
    CHECK(pr.curvature_ok);
  }
  CHECK(rep.all_pass);
}

TEST_CASE("smooth roof: full report at level 2") {
  auto f = RoofFunction::build(smooth(), pair4().rotation);
  auto db = derivative_bounds(f, 100, 16);
  auto rep = fayad_check(f, pair4(), db, 2, 20, 10, 3, 11);
  CHECK(rep.even.probes == 600);
  CHECK(rep.even.stretch_pass == rep.even.probes);
  CHECK(rep.even.curvature_pass == rep.even.probes);
  CHECK(rep.odd.stretch_pass == rep.odd.probes);
  CHECK(rep.odd.curvature_pass == rep.odd.probes);
  CHECK(rep.all_pass);
  CHECK(rep.even.eps == doctest::Approx(2 * rep.Theta / (rep.theta * 128)));
  CHECK(rep.odd.tau == doctest::Approx(2 * 3 * 3073));

  // finite-difference oracle for the derivative on 10 probes
  for (int i = 0; i < 10; ++i) {
    const auto& pr = rep.probes[i * 37];
    double h = 1e-4 * pr.cell_length;
    double mid = pr.cell_start + pr.cell_length / 2;
    bool along_x = pr.level % 2 == 0;
    auto at = [&](double d) {
      TorusPoint p = along_x ? torus_point(mid + d, pr.transverse) : torus_point(pr.transverse, mid + d);
      return birkhoff_fast(f, p, pr.m).value;
    };
    double fd = (at(h) - at(-h)) / (2 * h);
    CHECK(fd == doctest::Approx(pr.derivative_mid).epsilon(1e-5));
  }
  CHECK_THROWS_AS(fayad_check(f, pair4(), db, 4, 1, 1, 1, 1), ValidationError);
  CHECK_THROWS_AS(fayad_partitions(f, pair4(), 3), ValidationError);
}
