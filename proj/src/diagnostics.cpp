#include "specflow/diagnostics.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <numbers>
#include <string>

#include "specflow/errors.hpp"
#include "specflow/parallel.hpp"
#include "specflow/sums.hpp"

namespace specflow {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kU = 0x1p-53;

double frac(double t) { return t - std::floor(t); }

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ValidationError(where + ": unknown field '" + it.key() + "'");
  }
}

// Gauss-Legendre on [a, b] of a complex integrand.
template <class F>
std::complex<double> gl_complex(F&& fn, double a, double b) {
  using boost::math::quadrature::gauss;
  double re = gauss<double, 20>::integrate([&](double x) { return fn(x).real(); }, a, b);
  double im = gauss<double, 20>::integrate([&](double x) { return fn(x).imag(); }, a, b);
  return {re, im};
}

}  // namespace

double SliceDescriptor::eval(double x) const {
  double v = constant + slope * x;
  for (const auto& j : sawtooth) v += j.d * frac(x - j.at);
  for (const auto& j : steps) v += x >= j.at ? j.d : 0.0;
  for (const auto& w : waves) v += w.a * std::cos(2 * kPi * w.k * x) + w.b * std::sin(2 * kPi * w.k * x);
  return v;
}

double SliceDescriptor::derivative(double x) const {
  double v = slope;
  for (const auto& j : sawtooth) v += j.d;
  for (const auto& w : waves)
    v += 2 * kPi * w.k * (-w.a * std::sin(2 * kPi * w.k * x) + w.b * std::cos(2 * kPi * w.k * x));
  return v;
}

double SliceDescriptor::second_derivative(double x) const {
  double v = 0;
  for (const auto& w : waves) {
    double k2 = 4 * kPi * kPi * w.k * w.k;
    v -= k2 * (w.a * std::cos(2 * kPi * w.k * x) + w.b * std::sin(2 * kPi * w.k * x));
  }
  return v;
}

std::vector<double> SliceDescriptor::breakpoints() const {
  std::vector<double> b{0.0};
  for (const auto& j : sawtooth) b.push_back(j.at);
  for (const auto& j : steps) b.push_back(j.at);
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  return b;
}

double SliceDescriptor::certified_theta() const {
  double k = slope;
  for (const auto& j : sawtooth) k += j.d;
  double wobble = 0;
  for (const auto& w : waves) wobble += 2 * kPi * std::abs(w.k) * std::hypot(w.a, w.b);
  return std::fabs(k) - wobble;
}

json SliceDescriptor::to_json() const {
  json saw = json::array(), st = json::array(), wv = json::array();
  for (const auto& j : sawtooth) saw.push_back({{"d", j.d}, {"at", j.at}});
  for (const auto& j : steps) st.push_back({{"d", j.d}, {"at", j.at}});
  for (const auto& w : waves) wv.push_back({{"k", w.k}, {"a", w.a}, {"b", w.b}});
  return {{"slope", slope}, {"constant", constant}, {"sawtooth", saw}, {"steps", st}, {"waves", wv}};
}

SliceDescriptor SliceDescriptor::from_json(const json& j) {
  reject_unknown(j, {"slope", "constant", "sawtooth", "steps", "waves"}, "slice");
  SliceDescriptor h;
  h.slope = j.value("slope", 0.0);
  h.constant = j.value("constant", 0.0);
  auto jumps = [&](const char* key, std::vector<Jump>& out) {
    if (!j.contains(key)) return;
    for (const auto& e : j.at(key)) {
      reject_unknown(e, {"d", "at"}, std::string("slice.") + key);
      Jump jp{e.at("d").get<double>(), e.value("at", 0.0)};
      if (jp.at < 0 || jp.at >= 1) throw ValidationError("slice: breakpoint must lie in [0, 1)");
      out.push_back(jp);
    }
  };
  jumps("sawtooth", h.sawtooth);
  jumps("steps", h.steps);
  if (j.contains("waves"))
    for (const auto& e : j.at("waves")) {
      reject_unknown(e, {"k", "a", "b"}, "slice.waves");
      h.waves.push_back({e.at("k").get<int>(), e.value("a", 0.0), e.value("b", 0.0)});
    }
  return h;
}

ExpSumEstimate exp_sum(const SliceDescriptor& h, double theta, int quad_points) {
  if (quad_points < 1) throw ValidationError("exp_sum needs quad_points >= 1");
  ExpSumEstimate out;
  double cert = h.certified_theta();
  if (!(cert > 0)) throw ValidationError("exp_sum: |h'| >= theta > 0 cannot be certified from the descriptor");
  if (theta > cert)
    throw ValidationError("exp_sum: requested theta " + std::to_string(theta) + " exceeds the certified bound " +
                          std::to_string(cert));
  out.theta = theta > 0 ? theta : cert;
  auto bp = h.breakpoints();
  out.N = static_cast<int>(bp.size());
  bp.push_back(1.0);

  double slope_max = std::fabs(h.slope);
  for (const auto& j : h.sawtooth) slope_max += std::fabs(j.d);
  for (const auto& w : h.waves) slope_max += 2 * kPi * std::abs(w.k) * std::hypot(w.a, w.b);

  auto integrand = [&](double x) { return std::polar(1.0, 2 * kPi * h.eval(x)); };
  std::complex<double> coarse = 0, fine = 0;
  double var = 0;
  for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
    double a = bp[i], b = bp[i + 1];
    int panels = std::max(quad_points, static_cast<int>(std::ceil(2 * slope_max * (b - a))) + 1);
    for (int pass = 0; pass < 2; ++pass) {
      int P = panels << pass;
      double w = (b - a) / P;
      std::complex<double> acc = 0;
      for (int k = 0; k < P; ++k) acc += gl_complex(integrand, a + k * w, a + (k + 1) * w);
      (pass ? fine : coarse) += acc;
    }
    if (!h.waves.empty()) {
      using boost::math::quadrature::gauss_kronrod;
      var += gauss_kronrod<double, 31>::integrate([&](double x) { return std::fabs(h.second_derivative(x)); }, a, b,
                                                  15, 1e-12);
    }
  }
  out.value = std::abs(fine);
  out.quad_error = std::abs(fine - coarse) + 16 * kU;
  out.var_hprime = var;
  out.sum_bound = out.N / (kPi * out.theta) + var / (2 * kPi * out.theta * out.theta);
  out.pass = out.value - out.quad_error <= out.sum_bound;
  return out;
}

namespace {

// Sorted distinct translates L - k w for k < n, always including 0.
std::vector<u128> translates(const std::vector<u128>& lines, u128 w, int64_t n) {
  std::vector<u128> pts{0};
  for (u128 L : lines) {
    u128 v = L;
    for (int64_t k = 0; k < n; ++k, v -= w) pts.push_back(v);
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

double width(const std::vector<u128>& pts, std::size_t i) {
  u128 next = i + 1 < pts.size() ? pts[i + 1] : u128(0);
  return frac_to_double(next - pts[i]) == 0 ? 1.0 : frac_to_double(next - pts[i]);
}

double sinc(double z) { return std::fabs(z) < 1e-8 ? 1 - z * z / 6 : std::sin(z) / z; }

// Trigonometric part of f^(n) at q.
double trig_part(const RoofFunction& f, const TorusPoint& q, int64_t n) {
  Coord a = f.rotation().alpha_step(), b = f.rotation().beta_step();
  double v = 0;
  for (const auto& t : f.spec().trig) {
    u128 th = static_cast<u128>(static_cast<i128>(t.j)) * q.x.v + static_cast<u128>(static_cast<i128>(t.l)) * q.y.v;
    u128 om = static_cast<u128>(static_cast<i128>(t.j)) * a.v + static_cast<u128>(static_cast<i128>(t.l)) * b.v;
    v += (std::complex<double>(t.c, -t.s) * phase_sum(th, om, static_cast<uint64_t>(n), nullptr)).real();
  }
  return v;
}

u128 shift(u128 base, double offset) {
  if (offset >= 0) return base + frac_from_double(offset);
  return base - frac_from_double(-offset);
}

}  // namespace

WeakMixingEstimate weak_mixing_bound(const RoofFunction& f, const DerivativeBounds& db, double s, int64_t n,
                                     int quad) {
  if (s == 0 || !std::isfinite(s)) throw ValidationError("weak_mixing_bound needs a nonzero finite s");
  if (n < db.m0 || n < 1) throw ValidationError("weak_mixing_bound needs n >= m0 = " + std::to_string(db.m0));
  if (!(db.theta > 0)) throw ValidationError("weak_mixing_bound: theta not certified");
  if (quad < 1) throw ValidationError("weak_mixing_bound needs quad >= 1");
  WeakMixingEstimate out;
  bool primary_x = db.direction == 'x';
  out.N = static_cast<int>(primary_x ? f.x_lines().size() : f.y_lines().size());
  out.theta = db.theta;
  out.fxx_norm = primary_x ? f.sup_gxx() : f.sup_gyy();
  double as = std::fabs(s);
  out.bound = out.N / (kPi * as * out.theta) + out.fxx_norm / (2 * kPi * as * out.theta * out.theta * n);

  Coord al = f.rotation().alpha_step(), be = f.rotation().beta_step();
  auto xs = translates(f.x_lines(), al.v, n), ys = translates(f.y_lines(), be.v, n);
  out.rectangles = xs.size() * ys.size();
  double sd1 = 0, sd2 = 0;
  for (const auto& j : f.spec().x_jumps) sd1 += j.d;
  for (const auto& j : f.spec().y_jumps) sd2 += j.d;
  double gamma = f.spec().gamma;
  bool smooth = !f.spec().trig.empty();
  using boost::math::quadrature::gauss;

  std::vector<std::complex<double>> row(xs.size()), row_alt(xs.size());
  std::vector<double> row_err(xs.size());
  parallel_for(xs.size(), [&](std::size_t i) {
    double wx = width(xs, i);
    u128 cx = xs[i] + frac_from_double(wx / 2);
    std::complex<double> acc = 0, alt = 0;
    double err = 0;
    for (std::size_t k = 0; k < ys.size(); ++k) {
      double wy = width(ys, k);
      TorusPoint c{Coord{cx, 0}, Coord{ys[k] + frac_from_double(wy / 2), 0}};
      BirkhoffValue A0 = birkhoff_fast(f, c, n);
      double bx = n * sd1, by = n * (sd2 + gamma * f.alpha());
      if (gamma != 0) bx -= gamma * wrap_count(c.y.v, 0, be.v, be.err, static_cast<uint64_t>(n)).count.get_d();
      err += 2 * kPi * as * A0.rounding_bound * wx * wy;
      if (!smooth) {
        acc += std::polar(wx * sinc(kPi * s * bx * wx) * wy * sinc(kPi * s * by * wy), 2 * kPi * s * A0.value);
        continue;
      }
      double G0 = trig_part(f, c, n);
      auto cell = [&](auto rule) {
        auto at = [&](double dx, double dy) {
          TorusPoint q{Coord{shift(c.x.v, dx), 0}, Coord{shift(c.y.v, dy), 0}};
          double v = A0.value + bx * dx + by * dy + trig_part(f, q, n) - G0;
          return std::polar(1.0, 2 * kPi * s * v);
        };
        double re = rule([&](double dy) { return rule([&](double dx) { return at(dx, dy).real(); }, wx); }, wy);
        double im = rule([&](double dy) { return rule([&](double dx) { return at(dx, dy).imag(); }, wx); }, wy);
        return std::complex<double>(re, im);
      };
      auto lo = [&](auto fn, double w) {
        double total = 0;
        for (int p = 0; p < quad; ++p)
          total += gauss<double, 7>::integrate(fn, -w / 2 + p * w / quad, -w / 2 + (p + 1) * w / quad);
        return total;
      };
      auto hi = [&](auto fn, double w) {
        double total = 0;
        for (int p = 0; p < quad; ++p)
          total += gauss<double, 15>::integrate(fn, -w / 2 + p * w / quad, -w / 2 + (p + 1) * w / quad);
        return total;
      };
      std::complex<double> a = cell(hi), b = cell(lo);
      acc += a;
      alt += b;
    }
    row[i] = acc;
    row_alt[i] = alt;
    row_err[i] = err;
  });
  std::complex<double> total = 0, total_alt = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    total += row[i];
    total_alt += row_alt[i];
    out.quad_error += row_err[i];
  }
  if (smooth) out.quad_error += std::abs(total - total_alt);
  out.quad_error += 4 * kU * static_cast<double>(out.rectangles);
  out.integral = total;
  out.numeric = std::abs(total);
  out.pass = out.numeric - out.quad_error <= out.bound;
  return out;
}

LevelSetEstimate level_set_measure(const RoofFunction& f, const DerivativeBounds& db, double y, double t, double eps,
                                   int x_grid) {
  double c = db.c, C = db.C;
  if (x_grid < 2) throw ValidationError("level_set_measure needs x_grid >= 2");
  if (!(eps > 0) || !(eps < c / 4)) throw ValidationError("level_set_measure needs 0 < eps < c/4");
  if (!(t >= 2 * C * static_cast<double>(db.m0)))
    throw ValidationError("level_set_measure needs t >= 2 C m0 = " + std::to_string(2 * C * db.m0));
  if (!(db.theta > 0)) throw ValidationError("level_set_measure: theta not certified");
  LevelSetEstimate out;
  out.j_lo = std::max<int64_t>(1, static_cast<int64_t>(std::ceil((t - eps) / C)));
  out.j_hi = static_cast<int64_t>(std::floor((t + eps) / c));
  double N = static_cast<double>(db.direction == 'x' ? f.x_lines().size() : f.y_lines().size());
  out.bound = 16 * C / (db.theta * c * c) * (N * c + db.slope_upper) * eps;

  Coord al = f.rotation().alpha_step(), be = f.rotation().beta_step();
  TorusPoint y_only = torus_point(0, y);
  auto hit = [&](double x) {
    TorusPoint p{coord(x), y_only.y};
    BirkhoffValue F = birkhoff_fast(f, p, out.j_lo);
    double sum = F.value;
    TorusPoint q = orbit_point(f.rotation(), p, out.j_lo);
    for (int64_t j = out.j_lo; j <= out.j_hi; ++j) {
      if (std::fabs(sum - t) < eps) return true;
      sum += f.eval(q);
      q.x.v += al.v;
      q.x.err += al.err;
      q.y.v += be.v;
      q.y.err += be.err;
    }
    return false;
  };
  std::size_t G = static_cast<std::size_t>(x_grid);
  double w = 1.0 / G;
  std::vector<char> h(G);
  parallel_for(G, [&](std::size_t i) { h[i] = hit((i + 0.5) * w); });
  std::vector<double> measure(G), unsure(G);
  parallel_for(G, [&](std::size_t i) {
    bool edge = h[i] != h[(i + 1) % G] || h[i] != h[(i + G - 1) % G];
    if (!edge) {
      measure[i] = h[i] ? w : 0;
      return;
    }
    // 10x local refinement
    char sub[10];
    int count = 0, flips = 0;
    for (int k = 0; k < 10; ++k) {
      sub[k] = hit((i + (k + 0.5) / 10) * w);
      count += sub[k];
      if (k && sub[k] != sub[k - 1]) ++flips;
    }
    measure[i] = count * w / 10;
    unsure[i] = flips * w / 10;
  });
  for (std::size_t i = 0; i < G; ++i) {
    out.estimate += measure[i];
    out.uncertainty += unsure[i];
  }
  out.partial = out.uncertainty > 0.1 * out.estimate && out.estimate > 0;
  out.pass = out.estimate <= out.bound;
  return out;
}

bool FlowRect::contains(const FlowPoint& p) const {
  double x = to_double(p.p.x), y = to_double(p.p.y);
  return x >= x0 && x < x1 && y >= y0 && y < y1 && p.s >= s0 && p.s < s1;
}

json FlowRect::to_json() const { return {{"x", {x0, x1}}, {"y", {y0, y1}}, {"s", {s0, s1}}}; }

FlowRect FlowRect::from_json(const json& j) {
  reject_unknown(j, {"x", "y", "s"}, "rect");
  FlowRect r;
  auto pair = [&](const char* key, double& a, double& b) {
    if (!j.contains(key) || !j.at(key).is_array() || j.at(key).size() != 2)
      throw ValidationError(std::string("rect: '") + key + "' must be a [lo, hi] pair");
    a = j.at(key)[0].get<double>();
    b = j.at(key)[1].get<double>();
  };
  pair("x", r.x0, r.x1);
  pair("y", r.y0, r.y1);
  pair("s", r.s0, r.s1);
  return r;
}

double flow_measure(const RoofFunction& f, const FlowSet& set) {
  if (set.empty()) throw ValidationError("empty rectangle set");
  double total = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const FlowRect& r = set[i];
    if (!(r.x0 >= 0 && r.x0 < r.x1 && r.x1 <= 1 && r.y0 >= 0 && r.y0 < r.y1 && r.y1 <= 1 && r.s0 >= 0 &&
          r.s0 < r.s1))
      throw ValidationError("rectangle bounds out of range");
    double floor_roof = f.inf_over(r.x0, r.x1, r.y0, r.y1);
    if (r.s1 > floor_roof)
      throw ValidationError("rectangle height " + std::to_string(r.s1) + " exceeds the certified roof minimum " +
                            std::to_string(floor_roof) + " over its base");
    for (std::size_t k = 0; k < i; ++k) {
      const FlowRect& o = set[k];
      if (std::max(r.x0, o.x0) < std::min(r.x1, o.x1) && std::max(r.y0, o.y0) < std::min(r.y1, o.y1) &&
          std::max(r.s0, o.s0) < std::min(r.s1, o.s1))
        throw ValidationError("rectangles in a set must be disjoint");
    }
    total += (r.x1 - r.x0) * (r.y1 - r.y0) * (r.s1 - r.s0);
  }
  return total / f.integral();
}

TorusPoint random_torus_point(Philox& rng) {
  u128 x = static_cast<u128>(rng.next_u64()) << 64 | rng.next_u64();
  u128 y = static_cast<u128>(rng.next_u64()) << 64 | rng.next_u64();
  return {Coord{x, 0}, Coord{y, 0}};
}

CorrelationSeries correlation(const RoofFunction& f, const FlowSet& A, const FlowSet& B,
                              const std::vector<double>& times, std::size_t samples, uint64_t seed) {
  if (samples < 1) throw ValidationError("correlation needs samples >= 1");
  if (f.offset() != 0) throw ValidationError("correlation needs the uncentered roof");
  CorrelationSeries out;
  out.times = times;
  out.samples = samples;
  out.seed = seed;
  out.mu_a = flow_measure(f, A);
  out.mu_b = flow_measure(f, B);
  out.product = out.mu_a * out.mu_b;
  std::vector<double> weight;
  double wsum = 0;
  for (const auto& r : A) {
    wsum += (r.x1 - r.x0) * (r.y1 - r.y0) * (r.s1 - r.s0);
    weight.push_back(wsum);
  }
  std::vector<std::vector<char>> inside(samples, std::vector<char>(times.size()));
  parallel_for(samples, [&](std::size_t i) {
    Philox rng(seed, i);
    double u = rng.uniform(0, wsum);
    std::size_t k = std::upper_bound(weight.begin(), weight.end(), u) - weight.begin();
    const FlowRect& r = A[std::min(k, A.size() - 1)];
    FlowPoint p{torus_point(rng.uniform(r.x0, r.x1), rng.uniform(r.y0, r.y1)), rng.uniform(r.s0, r.s1)};
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
      FlowPoint q = flow(f, p, times[ti]);
      bool in = false;
      for (const auto& b : B) in = in || b.contains(q);
      inside[i][ti] = in;
    }
  });
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    double hits = 0;
    for (std::size_t i = 0; i < samples; ++i) hits += inside[i][ti];
    double p = hits / samples;
    out.estimates.push_back(out.mu_a * p);
    out.stderrs.push_back(out.mu_a * std::sqrt(std::max(p * (1 - p), 1.0 / samples) / samples));
  }
  return out;
}

namespace {

void require_sawtooth(const RoofFunction& f, const char* what) {
  if (!f.pure_sawtooth()) throw ValidationError(std::string(what) + " needs a roof of the form sum d{x - D} + sum d{y - D} + c");
}

}  // namespace

std::vector<RigidityRow> rigidity_scan(const RoofFunction& f, const std::vector<mpz_class>& denominators,
                                       std::size_t samples, uint64_t seed) {
  require_sawtooth(f, "rigidity_scan");
  if (samples < 1) throw ValidationError("rigidity_scan needs samples >= 1");
  double var = 0;
  for (const auto& j : f.spec().x_jumps) var += std::fabs(j.d);
  for (const auto& j : f.spec().y_jumps) var += std::fabs(j.d);
  std::vector<RigidityRow> rows;
  for (const auto& l : denominators) {
    if (l < 1) throw ValidationError("rigidity_scan: denominators must be positive");
    RigidityRow row;
    row.l = l;
    row.threshold = 2 * var + 1e-6;
    std::vector<double> dev(samples), rb(samples);
    parallel_for(samples, [&](std::size_t i) {
      Philox rng(seed, i);
      BirkhoffValue v = centered_sum_big(f, random_torus_point(rng), l);
      dev[i] = std::fabs(v.value);
      rb[i] = v.rounding_bound;
    });
    row.max_deviation = *std::max_element(dev.begin(), dev.end());
    row.rounding = *std::max_element(rb.begin(), rb.end());
    row.pass = row.max_deviation <= row.threshold;
    rows.push_back(row);
  }
  return rows;
}

Distribution empirical_distribution(const RoofFunction& f, const mpz_class& l, int bins, std::size_t samples,
                                    uint64_t seed) {
  require_sawtooth(f, "empirical_distribution");
  if (bins < 1 || samples < 1 || l < 1) throw ValidationError("empirical_distribution needs bins, samples, l >= 1");
  Distribution out;
  out.l = l;
  out.samples = samples;
  out.seed = seed;
  double s1 = 0, a1 = 0, s2 = 0, a2 = 0;
  for (const auto& j : f.spec().x_jumps) {
    s1 += j.d;
    a1 += std::fabs(j.d);
  }
  for (const auto& j : f.spec().y_jumps) {
    s2 += j.d;
    a2 += std::fabs(j.d);
  }
  out.V = std::fabs(s1) + a1 + std::fabs(s2) + a2;
  std::vector<double> values(samples), rb(samples);
  parallel_for(samples, [&](std::size_t i) {
    Philox rng(seed, i);
    BirkhoffValue v = centered_sum_big(f, random_torus_point(rng), l);
    values[i] = v.value;
    rb[i] = v.rounding_bound;
  });
  double lo = -out.V, hi = out.V;
  if (out.V == 0) {
    lo = -0.5;
    hi = 0.5;
  }
  for (int b = 0; b <= bins; ++b) out.edges.push_back(lo + (hi - lo) * b / bins);
  out.masses.assign(bins, 0);
  double outside = 0, mean = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    double v = values[i];
    mean += v;
    if (std::fabs(v) > out.V + rb[i] + 1e-12) outside += 1;
    int b = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
    out.masses[std::clamp(b, 0, bins - 1)] += 1.0 / samples;
  }
  out.outside_fraction = outside / samples;
  out.mean = mean / samples;
  return out;
}

}  // namespace specflow
