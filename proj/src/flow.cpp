#include "specflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "specflow/errors.hpp"
#include "specflow/parallel.hpp"
#include "specflow/rng.hpp"

namespace specflow {

namespace {

constexpr double kU = 0x1p-53;

// F(n) = f^(n)(p). Short sums are taken directly so that F(1) is exactly f(p).
BirkhoffValue partial(const RoofFunction& f, const TorusPoint& p, int64_t n, bool certify) {
  if (n >= -64 && n <= 64) return birkhoff(f, p, n);
  return birkhoff_fast(f, p, n, certify);
}

struct Located {
  int64_t n;
  double F, rb;
};

// Binary search on the increasing sequence F(n) inside the bracket.
Located locate_closed_form(const RoofFunction& f, const TorusPoint& p, double tau, int64_t lo, int64_t hi) {
  // invariant: F(lo) <= tau < F(hi)
  while (partial(f, p, lo, false).value > tau) lo -= std::max<int64_t>(1, (hi - lo) / 4 + 1);
  while (partial(f, p, hi, false).value <= tau) hi += std::max<int64_t>(1, (hi - lo) / 4 + 1);
  while (hi - lo > 1) {
    int64_t mid = lo + (hi - lo) / 2;
    if (partial(f, p, mid, false).value <= tau)
      lo = mid;
    else
      hi = mid;
  }
  // certify the answer; step if the uncertified search was misled
  for (int guard = 0; guard < 64; ++guard) {
    BirkhoffValue a = partial(f, p, lo, true), b = partial(f, p, lo + 1, true);
    if (a.value > tau) {
      --lo;
      continue;
    }
    if (b.value <= tau) {
      ++lo;
      continue;
    }
    return {lo, a.value, a.rounding_bound};
  }
  throw PrecisionError("flow: crossing index search did not settle");
}

// Step-by-step walk, used when the roof has the h term (no closed form).
Located locate_walk(const RoofFunction& f, const TorusPoint& p, double tau) {
  Coord a = f.rotation().alpha_step(), b = f.rotation().beta_step();
  TorusPoint q = p;
  double F = 0, comp = 0, abs_sum = 0, coord_err = 0;
  int64_t n = 0;
  auto add = [&](double v) {
    double t = F + v;
    comp += std::fabs(F) >= std::fabs(v) ? (F - t) + v : (v - t) + F;
    F = t;
    abs_sum += std::fabs(v);
  };
  auto bound = [&] {
    return static_cast<double>(std::abs(n)) * f.eval_rounding() + f.coord_sensitivity() * coord_err +
           2 * kU * abs_sum;
  };
  if (tau >= 0) {
    while (true) {
      double v = f.eval(q);
      if (F + comp + v > tau) break;
      add(v);
      coord_err += q.x.err + q.y.err;
      q.x.v += a.v;
      q.x.err += a.err;
      q.y.v += b.v;
      q.y.err += b.err;
      ++n;
    }
  } else {
    while (F + comp > tau) {
      q.x.v -= a.v;
      q.x.err += a.err;
      q.y.v -= b.v;
      q.y.err += b.err;
      add(-f.eval(q));
      coord_err += q.x.err + q.y.err;
      --n;
    }
  }
  return {n, F + comp, bound()};
}

}  // namespace

FlowPoint flow_point(const RoofFunction& f, const TorusPoint& p, double s) {
  if (!(s >= 0) || !(s < f.eval(p))) throw ValidationError("flow point height must satisfy 0 <= s < f(x, y)");
  return {p, s};
}

FlowResult flow_step(const RoofFunction& f, const FlowPoint& p, double t) {
  if (!std::isfinite(t)) throw ValidationError("flow time must be finite");
  FlowResult out;
  if (t == 0) {
    out.point = p;
    return out;
  }
  double tau = p.s + t;
  double c = f.inf(), C = f.sup();
  Located loc;
  if (f.has_h()) {
    loc = locate_walk(f, p.p, tau);
  } else {
    double lo = std::floor(std::min(tau / C, tau / c)) - 1, hi = std::ceil(std::max(tau / C, tau / c)) + 1;
    if (std::fabs(lo) > 9e15 || std::fabs(hi) > 9e15) throw ValidationError("flow time too large for 64-bit indices");
    loc = locate_closed_form(f, p.p, tau, static_cast<int64_t>(lo), static_cast<int64_t>(hi));
  }
  double s = tau - loc.F;
  double rb = loc.rb + 2 * kU * (std::fabs(tau) + std::fabs(loc.F)) + kU * std::fabs(p.s);
  TorusPoint q = orbit_point(f.rotation(), p.p, loc.n);
  double roof = f.eval(q);
  double gap = roof - s;
  double gap_rb = rb + f.eval_rounding() + f.coord_sensitivity() * (q.x.err + q.y.err);
  if (gap == 0) {
    // landed exactly on the roof: (x, f(x)) is the point (Tx, 0)
    q = orbit_point(f.rotation(), p.p, loc.n + 1);
    ++loc.n;
    s = 0;
  } else if (s != 0 && (s < rb || gap < gap_rb)) {
    throw PrecisionError("flow: new height within rounding of the floor or the roof (n = " + std::to_string(loc.n) +
                         ", height " + std::to_string(s) + ")");
  }
  out.point = {q, s};
  out.n = loc.n;
  out.rounding_bound = rb;
  return out;
}

double metric_df(const FlowPoint& a, const FlowPoint& b) {
  return std::max(circle_dist(a.p.x.v - b.p.x.v), circle_dist(a.p.y.v - b.p.y.v)) + std::fabs(a.s - b.s);
}

SampleSet uniform_sample(const RoofFunction& f, std::size_t count, uint64_t seed) {
  if (count < 1) throw ValidationError("uniform_sample needs count >= 1");
  SampleSet out;
  out.seed = seed;
  out.points.resize(count);
  std::vector<uint64_t> tries(count);
  double top = f.sup();
  parallel_for(count, [&](std::size_t i) {
    Philox rng(seed, i);
    for (uint64_t k = 1;; ++k) {
      TorusPoint p{Coord{static_cast<u128>(rng.next_u64()) << 64 | rng.next_u64(), 0.0},
                   Coord{static_cast<u128>(rng.next_u64()) << 64 | rng.next_u64(), 0.0}};
      double s = rng.uniform(0, top);
      if (s < f.eval(p)) {
        out.points[i] = {p, s};
        tries[i] = k;
        return;
      }
    }
  });
  uint64_t total = 0;
  for (uint64_t k : tries) total += k;
  out.acceptance_rate = static_cast<double>(count) / static_cast<double>(total);
  return out;
}

}  // namespace specflow
