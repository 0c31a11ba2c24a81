#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "specflow/diagnostics.hpp"
#include "specflow/errors.hpp"
#include "specflow/parallel.hpp"
#include "specflow/rotations.hpp"

using namespace specflow;

namespace {

constexpr double pi = std::numbers::pi;

RotationVector2 golden_type() {
  return RotationVector2::make(PartialQuotients::constant(1), PartialQuotients::constant(2), 192);
}

RoofSpec linear_roof(double a, double b, double c) {
  RoofSpec s;
  s.c0 = c;
  if (a != 0) s.x_jumps = {{a, 0}};
  if (b != 0) s.y_jumps = {{b, 0}};
  return s;
}

}  // namespace

TEST_CASE("exponential sums") {
  SliceDescriptor lin;
  lin.slope = 10;
  auto e = exp_sum(lin, 0, 8);
  CHECK(e.N == 1);
  CHECK(e.value < 1e-12);
  CHECK(e.sum_bound == doctest::Approx(1 / (10 * pi)));
  CHECK(e.pass);

  SliceDescriptor wavy;
  wavy.slope = 50;
  wavy.waves = {{1, 0, 0.3}};
  auto w1 = exp_sum(wavy, 0, 16), w2 = exp_sum(wavy, 0, 32);
  CHECK(std::fabs(w1.value - w2.value) < 1e-10);
  CHECK(w1.value <= w1.sum_bound);
  CHECK(w1.var_hprime == doctest::Approx(0.3 * 4 * pi * pi * 4 / (2 * pi)).epsilon(1e-8));

  SliceDescriptor steps;
  steps.slope = 10;
  steps.steps = {{0.25, 0.3}, {0.4, 0.6}};
  auto s = exp_sum(steps, 10, 8);
  CHECK(s.N == 3);
  CHECK(s.sum_bound == doctest::Approx(3 / (10 * pi)));
  CHECK(s.pass);

  CHECK_THROWS_AS(exp_sum(lin, 11, 8), ValidationError);
  SliceDescriptor flat;
  flat.waves = {{1, 1, 0}};
  CHECK_THROWS_AS(exp_sum(flat, 0, 8), ValidationError);
  CHECK(SliceDescriptor::from_json(steps.to_json()).to_json() == steps.to_json());
}

TEST_CASE("weak mixing bound") {
  auto rot = golden_type();
  auto f = RoofFunction::build(linear_roof(1, std::sqrt(2.0), 3), rot);
  auto db = derivative_bounds(f, 50, 8);
  CHECK(db.theta == doctest::Approx(1));
  auto a = weak_mixing_bound(f, db, 1, 50), b = weak_mixing_bound(f, db, 2, 50);
  CHECK(a.N == 1);
  CHECK(a.bound == doctest::Approx(1 / pi));
  CHECK(b.bound == doctest::Approx(a.bound / 2));
  for (int64_t n : {50, 100, 200})
    for (double s : {1.0, 2.0, 5.0, 10.0}) {
      auto w = weak_mixing_bound(f, db, s, n);
      CHECK(w.numeric <= w.bound);
    }

  // Monte Carlo oracle for the same integral
  for (auto [s, n] : {std::pair{1.0, int64_t(50)}, std::pair{5.0, int64_t(200)}}) {
    auto w = weak_mixing_bound(f, db, s, n);
    std::complex<double> acc = 0;
    int N = 20000;
    for (int i = 0; i < N; ++i) {
      Philox rng(31, i);
      acc += std::polar(1.0, 2 * pi * s * birkhoff_fast(f, random_torus_point(rng), n).value);
    }
    acc /= double(N);
    CHECK(std::abs(acc - w.integral) < 3 / std::sqrt(double(N)));
  }
  CHECK_THROWS_AS(weak_mixing_bound(f, db, 0, 50), ValidationError);
}

TEST_CASE("weak mixing integral with smooth terms") {
  auto rot = golden_type();
  RoofSpec spec = linear_roof(1, 0.5, 3);
  spec.trig = {{1, 0, 0.02, 0.01}, {0, 1, 0.0, 0.02}};
  auto f = RoofFunction::build(spec, rot);
  auto db = derivative_bounds(f, 40, 16);
  auto w = weak_mixing_bound(f, db, 1.5, 60, 2);
  CHECK(w.fxx_norm > 0);
  std::complex<double> acc = 0;
  int N = 20000;
  for (int i = 0; i < N; ++i) {
    Philox rng(32, i);
    acc += std::polar(1.0, 2 * pi * 1.5 * birkhoff_fast(f, random_torus_point(rng), 60).value);
  }
  acc /= double(N);
  CHECK(std::abs(acc - w.integral) < 3 / std::sqrt(double(N)));
  CHECK(w.quad_error < 1e-6);
}

TEST_CASE("level set measure") {
  auto rot = golden_type();
  auto f = RoofFunction::build(linear_roof(1, 0, 3), rot);
  auto db = derivative_bounds(f, 50, 8);
  double t = 50, eps = 0.01, y = 0.3;
  auto est = level_set_measure(f, db, y, t, eps, 2000);
  CHECK(est.pass);
  CHECK(est.estimate <= est.bound);
  // window: only t/(2C) < j < 2t/c can contribute
  CHECK(est.j_lo > t / (2 * db.C));
  CHECK(est.j_hi < 2 * t / db.c);

  // brute force at 10x resolution, independent of the library's scan
  int G = 20000, hits = 0;
  for (int i = 0; i < G; ++i) {
    double x = (i + 0.5) / G;
    double sum = 0, xs = x, ys = y;
    bool hit = false;
    for (int j = 0; j <= 20 && !hit; ++j) {
      hit = std::fabs(sum - t) < eps;
      sum += 3 + (xs - std::floor(xs));
      xs += f.alpha();
      ys += f.beta();
    }
    hits += hit;
  }
  CHECK(std::fabs(est.estimate - double(hits) / G) <= est.uncertainty + 2.0 / 2000);

  auto tiny = level_set_measure(f, db, y, t, 1e-7, 2000);
  CHECK(tiny.estimate < 1e-3);
  CHECK_THROWS_AS(level_set_measure(f, db, y, 1, eps, 100), ValidationError);
  CHECK_THROWS_AS(level_set_measure(f, db, y, t, 1, 100), ValidationError);
}

TEST_CASE("correlations") {
  auto rot = golden_type();
  auto f = RoofFunction::build(linear_roof(1, 2, 3), rot);
  FlowSet A{{0.0, 0.5, 0.0, 0.5, 0.0, 1.0}}, B{{0.5, 1.0, 0.5, 1.0, 1.0, 2.0}};
  // quadrature oracle for mu(A): integral of the indicator over the region under the roof
  double integral = 0;
  int G = 400;
  for (int i = 0; i < G; ++i)
    for (int j = 0; j < G; ++j) integral += f.eval((i + 0.5) / G, (j + 0.5) / G);
  integral /= double(G) * G;
  double muA = 0.25 * 1.0 / integral;

  auto same = correlation(f, A, A, {0.0}, 4000, 1);
  CHECK(same.mu_a == doctest::Approx(muA).epsilon(1e-4));
  CHECK(std::fabs(same.estimates[0] - same.mu_a) <= 3 * same.stderrs[0]);
  auto disjoint = correlation(f, A, B, {0.0}, 4000, 1);
  CHECK(disjoint.estimates[0] == 0);
  CHECK(disjoint.product == doctest::Approx(same.mu_a * 0.25 / integral).epsilon(1e-4));

  auto series = correlation(f, A, B, {1.0, 10.0, 100.0}, 2000, 9);
  for (std::size_t i = 0; i < series.times.size(); ++i) {
    CHECK(series.estimates[i] >= 0);
    CHECK(series.estimates[i] <= std::min(series.mu_a, series.mu_b) + 3 * series.stderrs[i]);
  }
  thread_cap() = 3;
  auto again = correlation(f, A, B, {1.0, 10.0, 100.0}, 2000, 9);
  thread_cap() = 0;
  CHECK(again.estimates == series.estimates);

  FlowSet tall{{0.0, 0.5, 0.0, 0.5, 0.0, 3.5}};
  CHECK_THROWS_AS(correlation(f, tall, B, {1.0}, 10, 1), ValidationError);
  FlowSet overlap{{0.0, 0.5, 0.0, 0.5, 0.0, 1.0}, {0.25, 0.75, 0.25, 0.75, 0.5, 1.5}};
  CHECK_THROWS_AS(flow_measure(f, overlap), ValidationError);
}

TEST_CASE("rigidity scan") {
  auto pal = palindromic_pair(256);
  REQUIRE(pal.common_denominators.size() >= 5);
  std::vector<mpz_class> ls(pal.common_denominators.begin(), pal.common_denominators.begin() + 5);
  auto flat = RoofFunction::build(linear_roof(0, 0, 2), pal.rotation);
  for (const auto& row : rigidity_scan(flat, ls, 50, 1)) CHECK(row.max_deviation == 0);

  auto f = RoofFunction::build(linear_roof(1, 2, 3), pal.rotation);
  auto rows = rigidity_scan(f, ls, 1000, 2);
  for (const auto& row : rows) {
    CHECK(row.threshold == doctest::Approx(6));
    CHECK(row.pass);
    CHECK(row.max_deviation <= 6);
  }
  // direct summation oracle at the small denominators
  for (int i = 0; i < 20; ++i) {
    Philox rng(2, i);
    TorusPoint p = random_torus_point(rng);
    for (long l : {7L, 22020L}) {
      auto big = centered_sum_big(f, p, mpz_class(l));
      auto direct = birkhoff(f, p, l);
      CHECK(big.value == doctest::Approx(direct.value - l * f.integral()).epsilon(1e-9).scale(1));
    }
  }
  CHECK_THROWS_AS(rigidity_scan(RoofFunction::build(RoofSpec{3, {}, {}, {{1, 0, 0.1, 0}}, 0}, pal.rotation), ls, 5, 1),
                  ValidationError);
}

TEST_CASE("empirical distributions") {
  auto pal = palindromic_pair(64);
  auto flat = RoofFunction::build(linear_roof(0, 0, 2), pal.rotation);
  auto point = empirical_distribution(flat, 7, 9, 200, 1);
  CHECK(point.outside_fraction == 0);
  CHECK(point.masses[4] == doctest::Approx(1));

  auto f = RoofFunction::build(linear_roof(1, 2, 3), pal.rotation);
  auto d = empirical_distribution(f, pal.common_denominators[2], 20, 4000, 3);
  CHECK(d.V == doctest::Approx(6));
  CHECK(d.outside_fraction == 0);
  // replication with an independent seed and twice the samples
  auto e = empirical_distribution(f, pal.common_denominators[2], 20, 8000, 4);
  for (int b = 0; b < 20; ++b) {
    double p = 0.5 * (d.masses[b] + e.masses[b]);
    double se = std::sqrt(p * (1 - p) * (1.0 / 4000 + 1.0 / 8000));
    CHECK(std::fabs(d.masses[b] - e.masses[b]) <= 3 * se + 1e-12);
  }
}
