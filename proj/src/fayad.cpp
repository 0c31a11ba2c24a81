#include "specflow/fayad.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "specflow/errors.hpp"
#include "specflow/parallel.hpp"
#include "specflow/rng.hpp"
#include "specflow/sums.hpp"

namespace specflow {

namespace {

mpz_class ceil_div(const mpq_class& x) {
  mpz_class r;
  mpz_cdiv_q(r.get_mpz_t(), x.get_num_mpz_t(), x.get_den_mpz_t());
  return r;
}

// Cells of the circle cut at lines[l] - j step, j < J, longer than 1 / (sqrt(g) q).
PartialPartition build(const std::vector<u128>& lines, const Coord& step, const mpz_class& J, const mpq_class& g,
                       const mpz_class& q, int level, char direction) {
  PartialPartition P;
  P.level = level;
  P.direction = direction;
  P.translates = J;
  if (!J.fits_ulong_p() || J * lines.size() > 20000000)
    throw ValidationError("partition level too deep: " + J.get_str() + " translates per line");
  unsigned long count = J.get_ui();
  std::vector<u128> pts;
  pts.reserve(count * lines.size());
  for (u128 L : lines) {
    u128 v = L;
    for (unsigned long j = 0; j < count; ++j, v -= step.v) pts.push_back(v);
  }
  std::sort(pts.begin(), pts.end());
  // endpoints carry error j * err; neighbours must be separated beyond it
  double err = static_cast<double>(count) * step.err;
  u128 err_ulps = static_cast<u128>(std::ldexp(err, 128)) + 1;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i)
    if (pts[i + 1] - pts[i] <= 2 * err_ulps)
      throw PrecisionError("partition endpoints closer than their certified error; raise the precision");
  mpz_class scale = mpz_class(1) << 256;
  mpz_class num = g.get_num() * q * q, den = g.get_den();
  P.threshold = 1.0 / (std::sqrt(g.get_d()) * q.get_d());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    u128 next = i + 1 < pts.size() ? pts[i + 1] : pts[0];
    u128 len = next - pts[i];
    if (pts.size() == 1) len = ~u128(0);
    mpz_class D = to_mpz(len);
    // |I|^2 g q^2 > 1, exactly, robust to the endpoint error
    mpz_class lo = D - 2 * to_mpz(err_ulps), hi = D + 2 * to_mpz(err_ulps);
    bool keep_lo = lo * lo * num > scale * den, keep_hi = hi * hi * num > scale * den;
    if (keep_lo != keep_hi) throw PrecisionError("cell length within error of the length threshold");
    if (!keep_lo) continue;
    P.start.push_back(pts[i]);
    P.length.push_back(len);
    double l = frac_to_double(len);
    P.mass += l;
    P.max_length = std::max(P.max_length, l);
  }
  P.length_ceiling = 2.0 / q.get_d();
  P.mass_floor = 1 - 2.0 * static_cast<double>(lines.size()) / std::sqrt(g.get_d());
  P.length_ok = P.max_length < P.length_ceiling;
  P.mass_ok = P.mass >= P.mass_floor;
  return P;
}

}  // namespace

FayadPartitions fayad_partitions(const RoofFunction& f, const YoccozPair& pair, std::size_t n) {
  if (n < 1 || n + 1 >= pair.q.size() || n + 1 >= pair.r.size())
    throw ValidationError("fayad level n = " + std::to_string(n) + " needs a pair built with at least n + 1 levels");
  mpq_class g = pair.gamma(n);
  const mpz_class &qn = pair.q[n], &qn1 = pair.q[n + 1], &rn = pair.r[n], &rn1 = pair.r[n + 1];
  mpz_class J = qn * ceil_div(mpq_class(qn1) / (g * qn));
  mpz_class Jr = rn * ceil_div(mpq_class(rn1) / (g * rn));
  FayadPartitions out;
  out.even = build(f.x_lines(), f.rotation().alpha_step(), J, g, qn, static_cast<int>(2 * n), 'x');
  out.odd = build(f.y_lines(), f.rotation().beta_step(), Jr, g, rn, static_cast<int>(2 * n + 1), 'y');
  return out;
}

FayadReport fayad_check(const RoofFunction& f, const YoccozPair& pair, const DerivativeBounds& db, std::size_t n,
                        int m_samples, int cell_samples, int transverse_samples, uint64_t seed) {
  if (m_samples < 1 || cell_samples < 1 || transverse_samples < 1)
    throw ValidationError("fayad_check needs positive sample counts");
  if (n + 2 >= pair.q.size())
    throw ValidationError("m-window for level " + std::to_string(2 * n + 1) + " needs q_{n+2}; build more levels");
  if (!(db.theta_x > 0 && db.theta_y > 0))
    throw ValidationError("fayad_check needs the strong condition: both slope bounds certified positive");
  if (pair.q[n] < db.m0 || pair.r[n] < db.m0)
    throw ValidationError("level n = " + std::to_string(n) + " is below n0: q_n, r_n must be >= m0");
  FayadPartitions parts = fayad_partitions(f, pair, n);
  FayadReport rep;
  rep.n = n;
  rep.theta = std::min(db.theta_x, db.theta_y);
  rep.Theta = db.Theta;
  rep.m0 = db.m0;
  double g = pair.gamma(n).get_d(), g1 = pair.gamma(n + 1).get_d();
  rep.gamma_n = g;
  double qn = pair.q[n].get_d(), rn = pair.r[n].get_d(), qn1 = pair.q[n + 1].get_d();

  auto level = [&](FayadLevel& L, const PartialPartition& P, double tau, double denom, double m_lo, double m_hi,
                   bool window_ok) {
    L.level = P.level;
    L.tau = tau;
    L.eps = 2 * rep.Theta / (rep.theta * denom);
    L.k = rep.theta * std::sqrt(g);
    L.m_lo = m_lo;
    L.m_hi = m_hi;
    L.window_ok = window_ok;
    L.mass = P.mass;
    L.max_length = P.max_length;
    L.cells = P.size();
    L.worst_stretch_margin = INFINITY;
    L.worst_curvature_margin = INFINITY;
  };
  // exact window claims: 2 tau_{2n+1} = 4 gamma(n) r_n <= J and 2 tau_{2n+2} = 4 gamma(n+1) q_{n+1} <= J'
  bool even_ok = mpq_class(4) * pair.gamma(n) * mpq_class(pair.r[n]) <= mpq_class(parts.even.translates) &&
                 mpq_class(db.m0) < pair.gamma(n) * mpq_class(pair.q[n]);
  bool odd_ok = mpq_class(4) * pair.gamma(n + 1) * mpq_class(pair.q[n + 1]) <= mpq_class(parts.odd.translates) &&
                mpq_class(db.m0) < pair.gamma(n) * mpq_class(pair.r[n]);
  level(rep.even, parts.even, 2 * g * qn, qn, g * qn, 4 * g * rn, even_ok);
  level(rep.odd, parts.odd, 2 * g * rn, rn, g * rn, 4 * g1 * qn1, odd_ok);

  auto run = [&](FayadLevel& L, const PartialPartition& P, bool along_x, uint64_t stream) {
    if (P.size() == 0) throw ValidationError("empty partial partition at level " + std::to_string(L.level));
    std::vector<FayadProbe> probes;
    Philox rng(seed, stream);
    for (int mi = 0; mi < m_samples; ++mi) {
      double u = rng.uniform();
      int64_t m = static_cast<int64_t>(std::llround(std::exp(std::log(L.m_lo) + u * (std::log(L.m_hi) - std::log(L.m_lo)))));
      m = std::clamp<int64_t>(m, static_cast<int64_t>(std::ceil(L.m_lo)), static_cast<int64_t>(std::floor(L.m_hi)));
      for (int ci = 0; ci < cell_samples; ++ci) {
        std::size_t cell = static_cast<std::size_t>(rng.uniform() * P.size()) % P.size();
        for (int ti = 0; ti < transverse_samples; ++ti) {
          FayadProbe pr;
          pr.level = L.level;
          pr.m = m;
          pr.cell = cell;
          pr.cell_start = frac_to_double(P.start[cell]);
          pr.cell_length = P.cell_length(cell);
          pr.transverse = rng.uniform();
          probes.push_back(pr);
        }
      }
    }
    parallel_for(probes.size(), [&](std::size_t i) {
      FayadProbe& pr = probes[i];
      const PartialPartition& PP = P;
      u128 mid = PP.start[pr.cell] + (PP.length[pr.cell] >> 1);
      TorusPoint p = along_x ? TorusPoint{Coord{mid, 0}, coord(pr.transverse)}
                             : TorusPoint{coord(pr.transverse), Coord{mid, 0}};
      uint64_t m = static_cast<uint64_t>(pr.m);
      double len = pr.cell_length;
      BirkhoffValue d1 = along_x ? birkhoff_dx(f, p, pr.m) : birkhoff_dy(f, p, pr.m);
      BirkhoffValue d2 = along_x ? birkhoff_dxx(f, p, pr.m) : birkhoff_dyy(f, p, pr.m);
      int ox1 = along_x ? 1 : 0, oy1 = 1 - ox1;
      double g1_sup = sup_g_derivative_sum(f, ox1, oy1, m);
      double g2_sup = sup_g_derivative_sum(f, 2 * ox1, 2 * oy1, m);
      double g3_sup = sup_g_derivative_sum(f, 3 * ox1, 3 * oy1, m);
      pr.derivative_mid = d1.value;
      // the non-trigonometric part of the derivative sum is constant along the cell
      double mean_part = 0;
      if (along_x) {
        for (const auto& j : f.spec().x_jumps) mean_part += j.d;
        mean_part *= static_cast<double>(m);
        if (f.has_h()) {
          Coord b = f.rotation().beta_step();
          mean_part -= f.spec().gamma * wrap_count(p.y.v, p.y.err, b.v, b.err, m).count.get_d();
        }
      } else {
        for (const auto& j : f.spec().y_jumps) mean_part += j.d;
        mean_part = static_cast<double>(m) * (mean_part + f.spec().gamma * f.alpha());
      }
      double via_mid = std::fabs(d1.value) - d1.rounding_bound - g2_sup * len / 2;
      double via_modulus = std::fabs(mean_part) - g1_sup;
      pr.inf_lower = std::max(via_mid, via_modulus);
      pr.second_upper = std::min(g2_sup, std::fabs(d2.value) + d2.rounding_bound + g3_sup * len / 2);
      pr.stretch_ok = L.k <= pr.inf_lower * len;
      pr.curvature_ok = pr.second_upper * len <= L.eps * pr.inf_lower;
    });
    for (const auto& pr : probes) {
      ++L.probes;
      L.stretch_pass += pr.stretch_ok;
      L.curvature_pass += pr.curvature_ok;
      L.worst_stretch_margin = std::min(L.worst_stretch_margin, pr.inf_lower * pr.cell_length - L.k);
      L.worst_curvature_margin =
          std::min(L.worst_curvature_margin, L.eps * pr.inf_lower - pr.second_upper * pr.cell_length);
      rep.probes.push_back(pr);
    }
  };
  run(rep.even, parts.even, true, 0);
  run(rep.odd, parts.odd, false, 1);
  rep.all_pass = rep.even.window_ok && rep.odd.window_ok && rep.even.stretch_pass == rep.even.probes &&
                 rep.even.curvature_pass == rep.even.probes && rep.odd.stretch_pass == rep.odd.probes &&
                 rep.odd.curvature_pass == rep.odd.probes;
  rep.coverage = std::to_string(m_samples) + " log-uniform m per window x " + std::to_string(cell_samples) +
                 " random cells x " + std::to_string(transverse_samples) +
                 " random transverse coordinates per level; the criterion asks for all m, cells and coordinates";
  return rep;
}

}  // namespace specflow
