#include "specflow/ratner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "specflow/errors.hpp"

namespace specflow {

namespace {

constexpr double kU = 0x1p-53;
constexpr u128 kHalf = static_cast<u128>(1) << 127;

struct Neumaier {
  double sum = 0, c = 0, abs = 0;
  void add(double x) {
    double t = sum + x;
    if (std::fabs(sum) >= std::fabs(x))
      c += (sum - t) + x;
    else
      c += (x - t) + sum;
    sum = t;
    abs += std::fabs(x);
  }
  double value() const { return sum + c; }
};

// Error of a coordinate in units of 2^-128, rounded up (0 for an exact point).
u128 tolerance(double err) {
  if (err <= 0) return 0;
  double u = std::ceil(std::ldexp(err, 128)) + 1;
  if (u >= 0x1p126) return kHalf;
  return static_cast<u128>(u);
}

u128 circ_dist(u128 a, u128 b) {
  u128 d = a - b;
  return (d >> 127) ? ~d + 1 : d;
}

void check_line(const Lifted& c, u128 at, int64_t n) {
  u128 tol = tolerance(c.err);
  if (tol != 0 && circ_dist(c.frac, at) <= tol)
    throw PrecisionError("crossing decision at n = " + std::to_string(n) + " is within the certified error");
}

// floor(c - at) for a line at 'at' in [0, 1).
inline int64_t floor_minus(const Lifted& c, u128 at) { return c.ip - (c.frac < at ? 1 : 0); }

// [c' - at] - [c - at]
int cross(const Lifted& c, const Lifted& cp, u128 at, int64_t n) {
  check_line(c, at, n);
  check_line(cp, at, n);
  return static_cast<int>(floor_minus(cp, at) - floor_minus(c, at));
}

// [{c} + step]
int wrap(const Lifted& c, const Coord& step, int64_t n) {
  u128 boundary = -step.v;  // {c} + step wraps iff {c} >= 1 - step
  check_line(c, boundary, n);
  return c.frac + step.v < c.frac ? 1 : 0;
}

Lifted lifted_at(const Lifted& c, const Coord& step, int64_t n) {
  mpz_class total = to_mpz(c.frac) + mpz_class(static_cast<long>(n)) * to_mpz(step.v);
  mpz_class ip = total >> 128;
  Lifted r;
  r.frac = low_u128(total);
  r.ip = c.ip + ip.get_si();
  r.err = c.err + static_cast<double>(n) * step.err;
  return r;
}

LiftedPair pair_at(const LiftedPair& pr, const Coord& a, const Coord& b, int64_t n) {
  LiftedPair r = pr;
  r.x = lifted_at(pr.x, a, n);
  r.xp = lifted_at(pr.xp, a, n);
  r.y = lifted_at(pr.y, b, n);
  r.yp = lifted_at(pr.yp, b, n);
  return r;
}

TorusPoint project(const Lifted& x, const Lifted& y) { return {Coord{x.frac, x.err}, Coord{y.frac, y.err}}; }

void step_point(TorusPoint& p, const Coord& a, const Coord& b) {
  p.x.v += a.v;
  p.x.err += a.err;
  p.y.v += b.v;
  p.y.err += b.err;
}

// Minimal-displacement lift of c' next to c (difference in (-1/2, 1/2]).
Lifted lift_near(const Lifted& c, u128 target, double err) {
  u128 delta = target - c.frac;
  Lifted r{c.ip, target, err};
  bool negative = (delta >> 127) && delta != kHalf;
  if (negative) {
    if (target > c.frac) --r.ip;
  } else if (target < c.frac) {
    ++r.ip;
  }
  return r;
}

uint64_t max_quotient(const PartialQuotients& pq, std::size_t n) {
  uint64_t best = 0;
  for (std::size_t i = 1; i <= n && pq.has(i); ++i) {
    mpz_class a = pq.at(i);
    uint64_t v = a.fits_ulong_p() ? a.get_ui() : std::numeric_limits<uint64_t>::max();
    best = std::max(best, v);
  }
  return best;
}

}  // namespace

SparseSequence SparseSequence::from_values(std::vector<int8_t> values, double R) {
  SparseSequence s;
  s.values = std::move(values);
  s.R = R;
  s.k.push_back(0);
  for (std::size_t n = 1; n < s.values.size(); ++n)
    if (s.values[n] != 0) s.k.push_back(static_cast<int64_t>(n));
  return s;
}

SparseSequence crossing_sequence(const Coord& alpha, const Lifted& x, const Lifted& x_prime, int64_t n_max) {
  if (n_max < 0) throw ValidationError("n_max must be nonnegative");
  double gap = std::fabs(diff(x_prime, x));
  if (gap >= 0.5) throw ValidationError("crossing_sequence needs |x - x'| < 1/2");
  std::vector<int8_t> values(static_cast<std::size_t>(n_max) + 1);
  Lifted a = x, b = x_prime;
  for (int64_t n = 0; n <= n_max; ++n) {
    values[n] = static_cast<int8_t>(cross(a, b, 0, n));
    a = add(a, alpha.v, alpha.err);
    b = add(b, alpha.v, alpha.err);
  }
  return SparseSequence::from_values(std::move(values), 1);
}

SparseSequence crossing_sequence(const RealRep& alpha, double x, double x_prime, int64_t n_max) {
  return crossing_sequence(alpha.frac().to_coord(), lifted(x), lifted(x_prime), n_max);
}

SparsenessVerdict sparseness_check(const SparseSequence& seq, double a, double b) {
  SparsenessVerdict v;
  v.crossings = seq.k.size() - 1;
  v.a_sparse = true;
  bool upper = true;
  for (std::size_t m = 1; m + 1 < seq.k.size(); ++m) {
    int64_t g = seq.k[m + 1] - seq.k[m];
    if (v.min_gap == 0 || g < v.min_gap) v.min_gap = g;
    v.max_gap = std::max(v.max_gap, g);
    if (g < a) v.a_sparse = false;
    if (g > b) upper = false;
  }
  if (v.crossings >= 1 && seq.k[1] - seq.k[0] > b) upper = false;
  // the unfinished last gap already exceeds b
  if (seq.n_max() - seq.k.back() > b) upper = false;
  v.ab_sparse = v.a_sparse && upper && v.crossings >= 2;
  return v;
}

SparseSumVerdict sparse_sum_bound(const SparseSequence& seq, double a) {
  SparseSumVerdict v;
  double S = 0;
  for (std::size_t n = 1; n <= seq.values.size(); ++n) {
    S += seq.values[n - 1];
    double bound = seq.R * (1 + static_cast<double>(n) / a);
    double r = std::fabs(S) / bound;
    if (r > v.worst_ratio) {
      v.worst_ratio = r;
      v.worst_n = static_cast<int64_t>(n);
    }
  }
  v.pass = v.worst_ratio <= 1;
  return v;
}

GapSweep gap_sweep(const Coord& alpha, const std::vector<double>& distances, const std::vector<double>& starts,
                   int64_t crossings_per_run) {
  GapSweep g;
  g.d = distances;
  g.C1 = std::numeric_limits<double>::infinity();
  g.C2 = 0;
  for (double d : distances) {
    if (!(d > 0 && d < 0.5)) throw ValidationError("sweep distances must lie in (0, 1/2)");
    int64_t mn = std::numeric_limits<int64_t>::max(), mx = 0;
    for (double x0 : starts) {
      Lifted a = lifted(x0), b = lifted(x0 + d);
      int64_t last = 0, count = 0;
      const int64_t limit = static_cast<int64_t>(std::ceil(1e3 * crossings_per_run / d));
      for (int64_t n = 1; count < crossings_per_run && n < limit; ++n) {
        a = add(a, alpha.v, alpha.err);
        b = add(b, alpha.v, alpha.err);
        if (cross(a, b, 0, n) == 0) continue;
        int64_t gap = n - last;
        mx = std::max(mx, gap);  // includes k_1 - k_0
        if (count >= 1) mn = std::min(mn, gap);
        last = n;
        ++count;
      }
      if (count < 2) throw ValidationError("gap sweep found fewer than two crossings");
    }
    g.min_gap_d.push_back(static_cast<double>(mn) * d);
    g.max_gap_d.push_back(static_cast<double>(mx) * d);
    g.C1 = std::min(g.C1, g.min_gap_d.back());
    g.C2 = std::max(g.C2, g.max_gap_d.back());
  }
  return g;
}

double CocycleModel::kappa(double eps) const { return eps / (6 * s() * C0 * C2); }

double CocycleModel::delta(double eps, int64_t N) const {
  return eps * eps * eps * C1 / (2 * C0 * static_cast<double>(N));
}

double CocycleModel::eps_cap() const {
  double s_ = static_cast<double>(s());
  return std::min({0.5, C0 * C1 / s_, h / (4 * s_)});
}

json CocycleModel::to_json() const {
  json labels = json::array();
  for (const auto& c : counters) labels.push_back(c.label);
  return json{{"H", H},
              {"counters", labels},
              {"case", case_i ? "i" : "ii"},
              {"s", s()},
              {"gamma", gamma},
              {"R", R},
              {"B", B},
              {"L", L},
              {"C0", C0},
              {"C1", C1},
              {"C2", C2},
              {"C1_sweep", C1_raw},
              {"C2_sweep", C2_raw},
              {"C1_safety", C1_safety},
              {"C2_safety", C2_safety},
              {"sweep_d", sweep_d},
              {"h", h},
              {"h_argmin", h_argmin},
              {"p0", p0},
              {"p1", p1},
              {"independence_K", independence_K},
              {"max_partial_quotient", max_partial_quotient},
              {"warnings", warnings}};
}

CocycleModel build_cocycle_model(const RoofFunction& f, const RotationVector2& rot) {
  const RoofSpec& sp = f.spec();
  if (sp.x_jumps.empty() || sp.y_jumps.empty())
    throw ValidationError("the cocycle model needs discontinuous sawtooth parts in both x and y");
  CocycleModel m;
  m.alpha = rot.alpha_step();
  m.beta = rot.beta_step();
  m.gamma = sp.gamma;
  m.case_i = sp.gamma != 0;
  double alpha = f.alpha(), beta = f.beta();

  double sum1 = 0, sum2 = 0, abs_d = 0;
  std::vector<double> indep;
  for (std::size_t i = 0; i < sp.x_jumps.size(); ++i) {
    const auto& j = sp.x_jumps[i];
    m.H.push_back(j.d);
    m.counters.push_back({Counter::Kind::XLine, frac_from_double(j.at), "N_1," + std::to_string(i + 1)});
    sum1 += j.d;
    abs_d += std::fabs(j.d);
    indep.push_back(j.d);
  }
  for (std::size_t i = 0; i < sp.y_jumps.size(); ++i) {
    const auto& j = sp.y_jumps[i];
    m.H.push_back(j.d);
    m.counters.push_back({Counter::Kind::YLine, frac_from_double(j.at), "N_2," + std::to_string(i + 1)});
    sum2 += j.d;
    abs_d += std::fabs(j.d);
    indep.push_back(j.d);
  }
  if (m.case_i) {
    m.H.push_back(sp.gamma);
    m.H.push_back(sp.gamma);
    m.counters.push_back({Counter::Kind::Heis1, 0, "N_1"});
    m.counters.push_back({Counter::Kind::Heis2, 0, "N_2"});
    indep.push_back(sp.gamma);
    if (sum1 - beta * sp.gamma == 0 && sum2 + alpha * sp.gamma == 0)
      throw ValidationError("both mean derivatives vanish: sum d1 - beta gamma = sum d2 + alpha gamma = 0");
  }

  // bounded integer-relation search over the jumps (and gamma)
  {
    const std::size_t k = indep.size();
    int K = static_cast<int>(std::floor((std::pow(1e6, 1.0 / static_cast<double>(k)) - 1) / 2));
    K = std::clamp(K, 1, 20);
    m.independence_K = K;
    std::vector<int> c(k, -K);
    while (true) {
      bool zero = std::all_of(c.begin(), c.end(), [](int v) { return v == 0; });
      auto first = std::find_if(c.begin(), c.end(), [](int v) { return v != 0; });
      if (!zero && *first > 0) {
        double w = 0, scale = 0;
        for (std::size_t i = 0; i < k; ++i) {
          w += c[i] * indep[i];
          scale += std::fabs(c[i] * indep[i]);
        }
        if (std::fabs(w) <= 1e-12 * scale) {
          std::ostringstream os;
          os << "integer relation among the jumps" << (m.case_i ? " and gamma" : "") << ":";
          for (std::size_t i = 0; i < k; ++i) os << ' ' << c[i];
          throw ValidationError(os.str());
        }
      }
      std::size_t i = 0;
      while (i < k && c[i] == K) c[i++] = -K;
      if (i == k) break;
      ++c[i];
    }
  }

  m.R = 1;
  m.B = std::fabs(sp.gamma);
  m.L = f.lipschitz_g();
  m.C0 = m.L + abs_d + std::max(1.0, std::fabs(sp.gamma)) * (std::fabs(alpha) + std::fabs(beta) + 2);

  m.sweep_d = {1e-2, 1e-3, 1e-4};
  const std::vector<double> starts{0.1234567, 0.5, 0.8765432};
  GapSweep ga = gap_sweep(m.alpha, m.sweep_d, starts, 24);
  GapSweep gb = gap_sweep(m.beta, m.sweep_d, starts, 24);
  m.C1_raw = std::min(ga.C1, gb.C1);
  m.C2_raw = std::max(ga.C2, gb.C2);
  m.C1 = std::min(1.0, m.C1_raw * m.C1_safety);
  m.C2 = std::max(1.0, m.C2_raw * m.C2_safety);

  // h = min |sum r_j h_j| over nonzero combinations, r_j in {-1, 0, 1}; equal
  // entries of H are merged so that a cancelling pair does not count as zero.
  {
    std::vector<double> distinct;
    std::vector<std::size_t> slot(m.H.size());
    for (std::size_t j = 0; j < m.H.size(); ++j) {
      auto it = std::find(distinct.begin(), distinct.end(), m.H[j]);
      slot[j] = static_cast<std::size_t>(it - distinct.begin());
      if (it == distinct.end()) distinct.push_back(m.H[j]);
    }
    const std::size_t s = m.H.size();
    std::vector<int> r(s, -1);
    m.h = std::numeric_limits<double>::infinity();
    while (true) {
      std::vector<int> merged(distinct.size(), 0);
      for (std::size_t j = 0; j < s; ++j) merged[slot[j]] += r[j];
      if (std::any_of(merged.begin(), merged.end(), [](int v) { return v != 0; })) {
        double w = 0;
        for (std::size_t i = 0; i < distinct.size(); ++i) w += merged[i] * distinct[i];
        if (std::fabs(w) < m.h) {
          m.h = std::fabs(w);
          m.h_argmin = r;
        }
      }
      std::size_t i = 0;
      while (i < s && r[i] == 1) r[i++] = -1;
      if (i == s) break;
      ++r[i];
    }
    if (!(m.h > 0)) throw ValidationError("H' contains zero: the jumps are not independent");
  }

  const double s = static_cast<double>(m.s());
  double sum_abs_h = 0;
  for (double v : m.H) sum_abs_h += std::fabs(v);
  m.p0 = m.h / 4;
  m.p1 = m.R * ((3 * s * m.C2 / m.C1 + 2) * sum_abs_h + m.B + 3 * s * m.C0 * m.C2 + 2);

  m.max_partial_quotient = std::max(max_quotient(rot.alpha, 200), max_quotient(rot.beta, 200));
  if (m.max_partial_quotient > 100)
    m.warnings.push_back("partial quotient " + std::to_string(m.max_partial_quotient) +
                         " among the first 200: bounded partial quotients are doubtful");
  return m;
}

double LiftedPair::d() const { return std::max(std::fabs(dx), std::fabs(dy)); }

LiftedPair lift_pair(const TorusPoint& p, const TorusPoint& q) {
  LiftedPair r;
  r.x = Lifted{0, p.x.v, p.x.err};
  r.y = Lifted{0, p.y.v, p.y.err};
  r.xp = lift_near(r.x, q.x.v, q.x.err);
  r.yp = lift_near(r.y, q.y.v, q.y.err);
  r.dx = diff(r.xp, r.x);
  r.dy = diff(r.yp, r.y);
  return r;
}

LiftedPair lift_pair(double x, double y, double xp, double yp) {
  LiftedPair r;
  r.x = lifted(x);
  r.y = lifted(y);
  r.xp = lifted(xp);
  r.yp = lifted(yp);
  r.dx = diff(r.xp, r.x);
  r.dy = diff(r.yp, r.y);
  return r;
}

void advance(LiftedPair& pr, const Coord& alpha, const Coord& beta) {
  pr.x = add(pr.x, alpha.v, alpha.err);
  pr.xp = add(pr.xp, alpha.v, alpha.err);
  pr.y = add(pr.y, beta.v, beta.err);
  pr.yp = add(pr.yp, beta.v, beta.err);
}

namespace {

int counter_at(const Counter& c, const LiftedPair& pr, const Coord& alpha, const Coord& beta, int64_t n) {
  switch (c.kind) {
    case Counter::Kind::XLine:
      return -cross(pr.x, pr.xp, c.at, n);
    case Counter::Kind::YLine:
      return -cross(pr.y, pr.yp, c.at, n);
    case Counter::Kind::Heis1: {
      int nx = cross(pr.x, pr.xp, 0, n);
      return nx == 0 ? 0 : nx * wrap(pr.y, beta, n);
    }
    case Counter::Kind::Heis2: {
      int ny = cross(pr.y, pr.yp, -beta.v, n);
      return ny == 0 ? 0 : -wrap(pr.xp, alpha, n) * ny;
    }
  }
  return 0;
}

}  // namespace

int counter_value(const Counter& c, const LiftedPair& pr, const Coord& alpha, const Coord& beta) {
  return counter_at(c, pr, alpha, beta, 0);
}

int boundary_counter(const CocycleModel& m, const LiftedPair& pr) {
  return m.case_i ? cross(pr.y, pr.yp, 0, 0) : 0;
}

double boundary_b(const CocycleModel& m, const LiftedPair& pr) {
  return m.case_i ? m.gamma * frac_to_double(pr.xp.frac) : 0.0;
}

IdentityResidual cocycle_identity_residual(const CocycleModel& model, const RoofFunction& f, const LiftedPair& start,
                                           int64_t n, Identity which) {
  if (n < 0) throw ValidationError("identity residual needs n >= 0");
  if (start.d() >= 0.5) throw ValidationError("identity residual needs points within distance 1/2");
  const Coord& a = model.alpha;
  const Coord& b = model.beta;
  const double alpha = f.alpha();
  IdentityResidual out;
  Neumaier lhs, rhs;
  LiftedPair pr = start;
  double max_err = 0;

  auto h_direct = [&](const Lifted& x, const Lifted& y) {
    double e = y.frac + b.v < y.frac ? 1.0 : 0.0;
    return alpha * frac_to_double(y.frac) - (frac_to_double(x.frac) + alpha) * e;
  };

  if (which == Identity::Sawtooth) {
    // u^(n)(x') - u^(n)(x) = n (x' - x) - sum ([x' + k alpha] - [x + k alpha])
    int64_t crossings = 0;
    for (int64_t k = 0; k < n; ++k) {
      lhs.add(frac_to_double(pr.xp.frac) - frac_to_double(pr.x.frac));
      crossings += cross(pr.x, pr.xp, 0, k);
      max_err = std::max(max_err, pr.x.err);
      pr.x = add(pr.x, a.v, a.err);
      pr.xp = add(pr.xp, a.v, a.err);
    }
    rhs.add(static_cast<double>(n) * start.dx);
    rhs.add(-static_cast<double>(crossings));
  } else if (which == Identity::Heisenberg) {
    // h^(n)(p') - h^(n)(p) = alpha n dy - ([y + n beta] - [y]) dx + {x'}([y'] - [y])
    //   - {x' + n alpha}([y' + n beta] - [y + n beta]) + sum N1 + sum N2
    int64_t n12 = 0;
    const Counter c1{Counter::Kind::Heis1, 0, ""}, c2{Counter::Kind::Heis2, 0, ""};
    for (int64_t k = 0; k < n; ++k) {
      lhs.add(h_direct(pr.xp, pr.yp) - h_direct(pr.x, pr.y));
      n12 += counter_at(c1, pr, a, b, k) + counter_at(c2, pr, a, b, k);
      max_err = std::max({max_err, pr.x.err, pr.y.err});
      advance(pr, a, b);
    }
    rhs.add(alpha * static_cast<double>(n) * start.dy);
    rhs.add(-static_cast<double>(pr.y.ip - start.y.ip) * start.dx);
    rhs.add(frac_to_double(start.xp.frac) * cross(start.y, start.yp, 0, 0));
    rhs.add(-frac_to_double(pr.xp.frac) * cross(pr.y, pr.yp, 0, n));
    rhs.add(static_cast<double>(n12));
  } else {
    const RoofSpec& sp = f.spec();
    double sum1 = 0, sum2 = 0;
    for (const auto& j : sp.x_jumps) sum1 += j.d;
    for (const auto& j : sp.y_jumps) sum2 += j.d;
    std::vector<int64_t> Nsum(model.s(), 0);
    Neumaier dg;
    for (int64_t k = 0; k < n; ++k) {
      TorusPoint P = project(pr.x, pr.y), Q = project(pr.xp, pr.yp);
      lhs.add(f.eval(Q) - f.eval(P));
      if (!sp.trig.empty()) dg.add(f.g(Q) - f.g(P));
      for (std::size_t j = 0; j < model.s(); ++j) Nsum[j] += counter_at(model.counters[j], pr, a, b, k);
      max_err = std::max({max_err, pr.x.err, pr.y.err});
      advance(pr, a, b);
    }
    const double nd = static_cast<double>(n);
    rhs.add(dg.value());
    rhs.add(nd * sum1 * start.dx);
    rhs.add(nd * (sum2 + sp.gamma * alpha) * start.dy);
    if (model.case_i) rhs.add(-sp.gamma * static_cast<double>(pr.y.ip - start.y.ip) * start.dx);
    for (std::size_t j = 0; j < model.s(); ++j) rhs.add(static_cast<double>(Nsum[j]) * model.H[j]);
    if (model.case_i) {
      rhs.add(boundary_b(model, start) * boundary_counter(model, start));
      rhs.add(-boundary_b(model, pr) * cross(pr.y, pr.yp, 0, n));
    }
    out.budget += static_cast<double>(n) * 2 * (f.eval_rounding() + f.coord_sensitivity() * max_err);
  }
  out.lhs = lhs.value();
  out.rhs = rhs.value();
  out.residual = std::fabs(out.lhs - out.rhs);
  out.budget += 8 * kU * (lhs.abs + rhs.abs + 1) + 4 * static_cast<double>(n) * max_err;
  return out;
}

json RatnerWitness::to_json() const {
  const char* st = status == Status::Ok ? "ok" : status == Status::NoWindow ? "no-window" : "model-failure";
  return json{{"status", st},
              {"message", message},
              {"M", M},
              {"L", L},
              {"p", p},
              {"p_rounding", p_rounding},
              {"good_fraction", good_fraction},
              {"good_count", good_count},
              {"eps", eps},
              {"eps_used", eps_used},
              {"eps_clamped", eps_clamped},
              {"d", d},
              {"delta", delta},
              {"within_delta", within_delta},
              {"kappa", kappa},
              {"ratio", ratio},
              {"m1", m1},
              {"m2", m2},
              {"M1", M1},
              {"M2", M2},
              {"chosen", chosen},
              {"p_M1", p_M1},
              {"p_M2", p_M2},
              {"jump_vector", jump_vector},
              {"horizon", horizon},
              {"M_in_range", M_in_range},
              {"good_bound", good_bound},
              {"eq25", eq25},
              {"eq25_worst", eq25_worst},
              {"valid", valid}};
}

RatnerWitness witness_constructive(const CocycleModel& model, const RoofFunction& f, const TorusPoint& p,
                                   const TorusPoint& q, double eps, int64_t N) {
  if (!(eps > 0)) throw ValidationError("eps must be positive");
  if (N < 1) throw ValidationError("N must be at least 1");
  RatnerWitness w;
  const LiftedPair start = lift_pair(p, q);
  const double d = start.d();
  if (d == 0) throw ValidationError("the two points coincide");
  const Coord& a = model.alpha;
  const Coord& b = model.beta;
  const std::size_t s = model.s();
  const double sd = static_cast<double>(s);

  w.d = d;
  w.eps = eps;
  w.eps_used = std::min(eps, 0.999 * model.eps_cap());
  w.eps_clamped = w.eps_used < eps;
  w.delta = model.delta(w.eps_used, N);
  w.kappa = model.kappa(w.eps_used);
  w.within_delta = d < w.delta;
  const double ceps = w.eps_used;
  w.L = static_cast<int64_t>(std::ceil(ceps / (model.C0 * d)));
  const int64_t L = w.L;

  // merged crossing times k_1 < k_2 < ... of N_1 .. N_s, with their values
  const std::size_t need = 3 * s + 1;
  std::vector<int64_t> k{0};
  std::vector<std::vector<int>> vals{std::vector<int>(s, 0)};
  w.horizon = static_cast<int64_t>(std::ceil((3 * sd + 2) * model.C2 / d)) + L + 16;
  const int64_t hard_limit = std::max<int64_t>(w.horizon * 8, 1000);
  LiftedPair pr = start;
  std::vector<int> cur(s);
  for (int64_t n = 0; k.size() <= need && n < hard_limit; ++n) {
    if (n > 0) {
      bool any = false;
      for (std::size_t j = 0; j < s; ++j) {
        cur[j] = counter_at(model.counters[j], pr, a, b, n);
        any = any || cur[j] != 0;
      }
      if (any) {
        k.push_back(n);
        vals.push_back(cur);
      }
    }
    advance(pr, a, b);
  }
  if (k.size() <= need) {
    w.status = RatnerWitness::Status::NoWindow;
    w.message = "only " + std::to_string(k.size() - 1) + " crossings within " + std::to_string(hard_limit) + " steps";
    return w;
  }

  // admissible (m1, m2) with the smallest m2 - m1
  auto gap = [&](std::size_t m) { return k[m + 1] - k[m]; };
  bool found = false;
  for (std::size_t m1 = s + 1; m1 <= 2 * s; ++m1) {
    if (gap(m1) <= L) continue;
    for (std::size_t m2 = m1 + 1; m2 <= m1 + s; ++m2) {
      if (gap(m2) <= L) continue;
      if (!found || static_cast<int64_t>(m2 - m1) < w.m2 - w.m1) {
        w.m1 = static_cast<int64_t>(m1);
        w.m2 = static_cast<int64_t>(m2);
        found = true;
      }
      break;
    }
  }
  if (!found) {
    std::ostringstream os;
    os << "no admissible (m1, m2) with gaps > L = " << L << "; gaps:";
    for (std::size_t m = 1; m < need; ++m) os << ' ' << gap(m);
    w.status = RatnerWitness::Status::NoWindow;
    w.message = os.str();
    return w;
  }

  auto pick = [&](int64_t c0) {
    for (int64_t c = c0; c <= c0 + 1; ++c)
      if (boundary_counter(model, pair_at(start, a, b, c)) == 0) return c;
    return int64_t{-1};
  };
  w.M1 = pick(k[w.m1 + 1] - L);
  w.M2 = pick(k[w.m2] + 1);
  if (w.M1 < 0 || w.M2 < 0) {
    w.status = RatnerWitness::Status::ModelFailure;
    w.message = "N_{s+1} nonzero at both candidates: the boundary counter is not sparse";
    return w;
  }

  w.jump_vector.assign(s, 0);
  for (int64_t m = w.m1 + 1; m <= w.m2; ++m)
    for (std::size_t j = 0; j < s; ++j) w.jump_vector[j] += vals[m][j];

  const TorusPoint P0 = project(start.x, start.y), Q0 = project(start.xp, start.yp);
  auto delta_f = [&](int64_t M, double* rb) {
    BirkhoffValue fp = birkhoff_fast(f, P0, M), fq = birkhoff_fast(f, Q0, M);
    *rb = fp.rounding_bound + fq.rounding_bound;
    return fq.value - fp.value;
  };
  double rb1 = 0, rb2 = 0;
  w.p_M1 = delta_f(w.M1, &rb1);
  w.p_M2 = delta_f(w.M2, &rb2);
  if (std::fabs(w.p_M1) > model.p0) {
    w.chosen = 1;
    w.M = w.M1;
    w.p = w.p_M1;
    w.p_rounding = rb1;
  } else if (std::fabs(w.p_M2) > model.p0) {
    w.chosen = 2;
    w.M = w.M2;
    w.p = w.p_M2;
    w.p_rounding = rb2;
  } else {
    w.status = RatnerWitness::Status::ModelFailure;
    w.message = "both |f^(M1)| and |f^(M2)| differences are at most h/4: independence assumption broken";
    return w;
  }
  const int64_t M = w.M;

  // the window [M, M + L)
  LiftedPair wp = pair_at(start, a, b, M);
  const double bN0 = boundary_b(model, wp) * boundary_counter(model, wp);
  std::vector<int64_t> Nsum(s, 0);
  Neumaier acc;
  double round = w.p_rounding;
  w.eq25 = true;
  w.eq25_worst = -std::numeric_limits<double>::infinity();
  for (int64_t n = M; n < M + L; ++n) {
    double dn = w.p + acc.value();
    if (std::fabs(dn - w.p) < ceps) ++w.good_count;
    double comb = 0;
    for (std::size_t j = 0; j < s; ++j) comb += static_cast<double>(Nsum[j]) * model.H[j];
    double bn = boundary_b(model, wp) * boundary_counter(model, wp);
    double lhs = std::fabs(dn - w.p - comb);
    double rhs = std::fabs(bN0 - bn) + model.C0 * static_cast<double>(n - M) * d;
    w.eq25_worst = std::max(w.eq25_worst, lhs - rhs);
    if (lhs > rhs + round + 1e-12) w.eq25 = false;

    TorusPoint P = project(wp.x, wp.y), Q = project(wp.xp, wp.yp);
    acc.add(f.eval(Q) - f.eval(P));
    round += 2 * f.eval_rounding();
    for (std::size_t j = 0; j < s; ++j) Nsum[j] += counter_at(model.counters[j], wp, a, b, n);
    advance(wp, a, b);
  }

  w.good_fraction = static_cast<double>(w.good_count) / static_cast<double>(L);
  w.ratio = static_cast<double>(L) / static_cast<double>(M);
  const double Md = static_cast<double>(M);
  w.M_in_range = Md >= model.C1 / d && Md <= 3 * sd * model.C2 / d + 2;
  w.good_bound = static_cast<double>(w.good_count) >= static_cast<double>(L) - d * static_cast<double>(L) / model.C1 - 1;
  const double ap = std::fabs(w.p);
  w.valid = w.ratio >= w.kappa && ap >= model.p0 && ap <= model.p1 && w.good_fraction > 1 - ceps && M >= N && L >= N;
  if (!w.valid) w.message = "witness fails the Ratner window conditions";
  return w;
}

std::vector<double> difference_series(const RoofFunction& f, const TorusPoint& p, const TorusPoint& q, int64_t n_max) {
  if (n_max < 0) throw ValidationError("n_max must be nonnegative");
  const Coord a = f.rotation().alpha_step(), b = f.rotation().beta_step();
  std::vector<double> out(static_cast<std::size_t>(n_max) + 1);
  Neumaier acc;
  TorusPoint P = p, Q = q;
  for (int64_t n = 0; n <= n_max; ++n) {
    out[n] = acc.value();
    if (n == n_max) break;
    acc.add(f.eval(Q) - f.eval(P));
    step_point(P, a, b);
    step_point(Q, a, b);
  }
  return out;
}

EmpiricalWitness witness_empirical(const RoofFunction& f, const TorusPoint& p, const TorusPoint& q, double eps,
                                   int64_t M_lo, int64_t M_hi, int64_t L, int64_t stride, double p_min) {
  if (!(eps > 0) || L < 1 || stride < 1 || M_lo < 0 || M_hi < M_lo)
    throw ValidationError("witness_empirical needs eps > 0, L >= 1, stride >= 1 and 0 <= M_lo <= M_hi");
  std::vector<double> diffs = difference_series(f, p, q, M_hi + L);
  EmpiricalWitness best;
  best.L = L;
  best.good_fraction = -1;
  std::vector<double> win(static_cast<std::size_t>(L));
  for (int64_t M = M_lo; M <= M_hi; M += stride) {
    std::copy(diffs.begin() + M, diffs.begin() + M + L, win.begin());
    auto mid = win.begin() + (L - 1) / 2;
    std::nth_element(win.begin(), mid, win.end());
    double med = *mid;
    if (std::fabs(med) < p_min) continue;
    ++best.windows;
    int64_t good = 0;
    for (int64_t n = M; n < M + L; ++n)
      if (std::fabs(diffs[n] - med) < eps) ++good;
    double score = static_cast<double>(good) / static_cast<double>(L);
    if (score > best.good_fraction) {
      best.good_fraction = score;
      best.M = M;
      best.p = med;
    }
  }
  if (best.good_fraction < 0) best.good_fraction = 0;
  return best;
}

}  // namespace specflow
