#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "specflow/errors.hpp"
#include "specflow/rng.hpp"
#include "specflow/roof.hpp"
#include "specflow/sums.hpp"

using namespace specflow;

namespace {

constexpr double pi = std::numbers::pi;

RotationVector2 golden() {
  return RotationVector2::make(PartialQuotients::constant(1), PartialQuotients::constant(2), 192);
}

RoofSpec mixed() {
  RoofSpec s;
  s.c0 = 4;
  s.x_jumps = {{1.0, 0.0}, {-0.5, 0.3}};
  s.y_jumps = {{0.7, 0.6}};
  s.trig = {{1, 0, 0.1, 0.05}, {0, 2, -0.05, 0.02}, {1, -1, 0.03, 0.0}};
  s.gamma = 0.4;
  return s;
}

// plain double evaluation kept apart from the library
double naive(const RoofSpec& s, double al, double be, double x, double y) {
  auto fr = [](double t) { return t - std::floor(t); };
  double v = s.c0;
  for (auto& j : s.x_jumps) v += j.d * fr(x - j.at);
  for (auto& j : s.y_jumps) v += j.d * fr(y - j.at);
  for (auto& t : s.trig) {
    double ph = 2 * pi * (t.j * x + t.l * y);
    v += t.c * std::cos(ph) + t.s * std::sin(ph);
  }
  v += s.gamma * (al * fr(y) - (fr(x) + al) * std::floor(fr(y) + be));
  return v;
}

}  // namespace

TEST_CASE("floor sums against brute force") {
  Philox rng(11, 0);
  for (int i = 0; i < 300; ++i) {
    long n = static_cast<long>(rng.uniform(0, 60)), m = 1 + static_cast<long>(rng.uniform(0, 50));
    long a = static_cast<long>(rng.uniform(0, 200)), b = static_cast<long>(rng.uniform(0, 200));
    mpz_class brute = 0;
    for (long k = 0; k < n; ++k) brute += (a * k + b) / m;
    CHECK(floor_sum(n, m, a, b) == brute);
  }
  CHECK_THROWS_AS(floor_sum(1, 0, 1, 1), ValidationError);
}

TEST_CASE("sawtooth and phase sums against direct summation") {
  Philox rng(12, 0);
  for (int i = 0; i < 40; ++i) {
    u128 u = frac_from_double(rng.uniform(0, 1)), a = frac_from_double(rng.uniform(0, 1));
    uint64_t m = 1 + static_cast<uint64_t>(rng.uniform(0, 3000));
    double direct = 0;
    u128 x = u;
    for (uint64_t k = 0; k < m; ++k, x += a) direct += frac_to_double(x);
    OrbitSum s = sawtooth_sum(u, 0, a, 0, m);
    CHECK(s.certified);
    CHECK(s.value == doctest::Approx(direct).epsilon(1e-12));

    std::complex<double> z = 0;
    x = u;
    for (uint64_t k = 0; k < m; ++k, x += a) z += std::polar(1.0, 2 * pi * frac_to_double(x));
    double r = 0;
    std::complex<double> w = phase_sum(u, a, m, &r);
    CHECK(std::abs(w - z) < 1e-9 * m);
    CHECK(r >= 0);
  }
  WrapCount w = wrap_count(frac_from_double(0.75), 0, frac_from_double(0.5), 0, 3);
  CHECK(w.certified);
  CHECK(w.count == 2);
}

TEST_CASE("evaluation, continuity and JSON") {
  auto rot = golden();
  RoofSpec s;
  s.c0 = 1;
  s.x_jumps = {{0.5, 0.0}};
  auto f = RoofFunction::build(s, rot);
  CHECK(f.eval(0.5, 0.1) == doctest::Approx(1.25));

  RoofSpec t;
  t.c0 = 3;
  t.x_jumps = {{1, 0}};
  t.y_jumps = {{2, 0}};
  auto g = RoofFunction::build(t, rot);
  CHECK(g.integral() == doctest::Approx(4.5));
  CHECK(g.inf() <= 3.0);
  CHECK(g.inf() > 2.999);
  CHECK(g.sup() >= 6.0);
  // right-continuous: value at the jump is the limit from the right
  auto e = RoofFunction::build(mixed(), rot);
  CHECK(e.eval(0.3, 0.2) == doctest::Approx(e.eval(0.3 + 1e-12, 0.2)).epsilon(1e-9));
  CHECK(std::fabs(e.eval(0.3, 0.2) - e.eval(0.3 - 1e-9, 0.2)) > 0.4);
  // a point with error that straddles a line is refused
  TorusPoint fuzzy = torus_point(0.3, 0.2);
  fuzzy.x.err = 1e-20;
  CHECK_THROWS_AS(e.eval(fuzzy), PrecisionError);

  CHECK(RoofSpec::from_json(mixed().to_json()).to_json() == mixed().to_json());
  CHECK_THROWS_AS(RoofSpec::from_json(json{{"c0", 1}, {"bogus", 2}}), ValidationError);
  CHECK_THROWS_AS(RoofSpec::from_json(json{{"c0", 1}, {"x_jumps", {{{"d", 1}, {"at", 1.5}}}}}), ValidationError);
  RoofSpec neg;
  neg.c0 = 0.2;
  neg.x_jumps = {{-1, 0}};
  CHECK_THROWS_AS(RoofFunction::build(neg, rot), ValidationError);
}

TEST_CASE("evaluation agrees with a naive formula") {
  auto rot = golden();
  auto f = RoofFunction::build(mixed(), rot);
  Philox rng(13, 0);
  for (int i = 0; i < 500; ++i) {
    double x = rng.uniform(0, 1), y = rng.uniform(0, 1);
    TorusPoint p = torus_point(x, y);
    double xs = frac_to_double(p.x.v), ys = frac_to_double(p.y.v);
    CHECK(f.eval(p) == doctest::Approx(naive(mixed(), f.alpha(), f.beta(), xs, ys)).epsilon(1e-12));
    // inf and sup enclose every sampled value
    CHECK(f.eval(p) >= f.inf());
    CHECK(f.eval(p) <= f.sup());
  }
}

TEST_CASE("integral of the h term matches its closed form") {
  auto rot = golden();
  RoofSpec s;
  s.c0 = 2;
  s.gamma = 1;
  auto f = RoofFunction::build(s, rot);
  double al = f.alpha(), be = f.beta();
  CHECK(f.integral() - 2 == doctest::Approx(al / 2 - (0.5 + al) * be).epsilon(1e-12));
  CHECK(f.integral_error() < 1e-12);
  auto c = f.centered();
  CHECK(c.integral() == doctest::Approx(0).epsilon(1e-14));
  // Monte Carlo sanity check on the mixed roof
  auto m = RoofFunction::build(mixed(), rot);
  Philox rng(14, 0);
  double acc = 0;
  int n = 200000;
  for (int i = 0; i < n; ++i) acc += m.eval(rng.uniform(0, 1), rng.uniform(0, 1));
  CHECK(acc / n == doctest::Approx(m.integral()).epsilon(5e-3));
}

TEST_CASE("closed-form Birkhoff sums agree with direct summation") {
  auto rot = golden();
  auto f = RoofFunction::build(mixed(), rot);
  TorusPoint p = torus_point(0.123, 0.456);
  for (int64_t m : {1LL, 2LL, 17LL, 1000LL, 54321LL, -1LL, -999LL}) {
    auto a = birkhoff(f, p, m), b = birkhoff_fast(f, p, m);
    CHECK(std::fabs(a.value - b.value) <= a.rounding_bound + b.rounding_bound);
    CHECK(a.rounding_bound < 1e-6 * (1 + std::fabs(static_cast<double>(m))));
  }
  CHECK(birkhoff(f, p, 0).value == 0);
}

TEST_CASE("cocycle identity") {
  auto rot = golden();
  auto f = RoofFunction::build(mixed(), rot);
  Philox rng(15, 0);
  for (int i = 0; i < 50; ++i) {
    TorusPoint p = torus_point(rng.uniform(0, 1), rng.uniform(0, 1));
    int64_t n = static_cast<int64_t>(rng.uniform(-3000, 3000)), m = static_cast<int64_t>(rng.uniform(-3000, 3000));
    auto whole = birkhoff_fast(f, p, n + m);
    auto first = birkhoff_fast(f, p, n);
    auto second = birkhoff_fast(f, orbit_point(rot, p, n), m);
    CHECK(std::fabs(whole.value - first.value - second.value) <=
          whole.rounding_bound + first.rounding_bound + second.rounding_bound);
  }
}

TEST_CASE("derivative sums") {
  auto rot = golden();
  auto f = RoofFunction::build(mixed(), rot);
  TorusPoint p = torus_point(0.41, 0.77);
  int64_t m = 300;
  Coord a = rot.alpha_step(), b = rot.beta_step();
  double sx = 0, sy = 0, sxx = 0, syy = 0;
  TorusPoint q = p;
  for (int64_t k = 0; k < m; ++k) {
    sx += f.fx(q);
    sy += f.fy(q);
    sxx += f.g(q, 2, 0);
    syy += f.g(q, 0, 2);
    q.x.v += a.v;
    q.y.v += b.v;
  }
  CHECK(birkhoff_dx(f, p, m).value == doctest::Approx(sx).epsilon(1e-10));
  CHECK(birkhoff_dy(f, p, m).value == doctest::Approx(sy).epsilon(1e-10));
  CHECK(birkhoff_dxx(f, p, m).value == doctest::Approx(sxx).epsilon(1e-9));
  CHECK(birkhoff_dyy(f, p, m).value == doctest::Approx(syy).epsilon(1e-9));
  // central finite differences of the sum itself, small enough not to cross a line
  double h = 1e-7;
  double fdx = (birkhoff_fast(f, torus_point(0.41 + h, 0.77), m).value -
                birkhoff_fast(f, torus_point(0.41 - h, 0.77), m).value) / (2 * h);
  double fdy = (birkhoff_fast(f, torus_point(0.41, 0.77 + h), m).value -
                birkhoff_fast(f, torus_point(0.41, 0.77 - h), m).value) / (2 * h);
  CHECK(fdx == doctest::Approx(sx).epsilon(1e-4));
  CHECK(fdy == doctest::Approx(sy).epsilon(1e-4));
  // the modulus bound dominates every value
  CHECK(std::fabs(sxx) <= sup_g_derivative_sum(f, 2, 0, m));
  CHECK(std::fabs(syy) <= sup_g_derivative_sum(f, 0, 2, m));
}

TEST_CASE("derivative bounds") {
  auto rot = golden();
  RoofSpec s;
  s.c0 = 1;
  s.x_jumps = {{1, 0}};
  auto f = RoofFunction::build(s, rot);
  auto db = derivative_bounds(f, 50, 8);
  CHECK(db.direction == 'x');
  CHECK(db.theta == doctest::Approx(1));
  CHECK(db.Theta == 0);
  CHECK(db.m0 == 1);

  s.c0 = 2;
  s.trig = {{1, 0, 0.1, 0}};
  auto g = RoofFunction::build(s, rot);
  auto dg = derivative_bounds(g, 200, 16);
  CHECK(dg.Theta == doctest::Approx(0.1 * 4 * pi * pi));
  CHECK(dg.theta > 0.8);
  CHECK(dg.theta <= 1);
  CHECK(dg.slope_upper >= 1);

  RoofSpec flat;
  flat.c0 = 1;
  flat.trig = {{1, 0, 0.1, 0}};
  CHECK_THROWS_AS(derivative_bounds(RoofFunction::build(flat, rot), 10, 4), ValidationError);
}

TEST_CASE("von Neumann means") {
  auto rot = golden();
  auto f = RoofFunction::build(mixed(), rot);
  auto vn = f.von_neumann();
  CHECK(vn.ix == doctest::Approx(0.5 - 0.4 * f.beta()));
  CHECK(vn.iy == doctest::Approx(0.7 + 0.4 * f.alpha()));
  CHECK(vn.strong);
}

TEST_CASE("large-index centered sums") {
  auto rot = golden();
  RoofSpec s;
  s.c0 = 3;
  s.x_jumps = {{1, 0}};
  s.y_jumps = {{2, 0}};
  auto f = RoofFunction::build(s, rot);
  TorusPoint p = torus_point(0.25, 0.5);
  for (long m : {1L, 100L, 77777L}) {
    auto big = centered_sum_big(f, p, mpz_class(m));
    auto direct = birkhoff_fast(f.centered(), p, m);
    CHECK(big.value == doctest::Approx(direct.value).epsilon(1e-9).scale(1));
  }
  auto huge = centered_sum_big(f, p, mpz_class("1000000000000000000000000"));
  // bounded-type rotation: the centered sum grows only logarithmically
  CHECK(std::fabs(huge.value) < 100);
  CHECK_THROWS_AS(centered_sum_big(RoofFunction::build(mixed(), rot), p, 10), ValidationError);
}
