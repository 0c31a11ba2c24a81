#include "specflow/roof.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "specflow/errors.hpp"
#include "specflow/parallel.hpp"
#include "specflow/sums.hpp"

namespace specflow {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kU = 0x1p-53;

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ValidationError(where + ": unknown field '" + it.key() + "'");
  }
}

double number(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ValidationError(where + ": missing '" + key + "'");
  const json& v = j.at(key);
  if (!v.is_number()) throw ValidationError(where + ": '" + key + "' must be a number");
  double x = v.get<double>();
  if (!std::isfinite(x)) throw ValidationError(where + ": '" + key + "' must be finite");
  return x;
}

struct Neumaier {
  double sum = 0, comp = 0;
  void add(double v) {
    double t = sum + v;
    if (std::fabs(sum) >= std::fabs(v))
      comp += (sum - t) + v;
    else
      comp += (v - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

bool carry(u128 y, u128 b) { return y + b < y; }

// Orbit start for negative m: f^(m)(p) = -f^(|m|)(T^m p).
struct Segment {
  TorusPoint start;
  uint64_t n;
  double sign;
};

Segment segment(const RoofFunction& f, const TorusPoint& p, int64_t m) {
  if (m >= 0) return {p, static_cast<uint64_t>(m), 1.0};
  return {orbit_point(f.rotation(), p, m), static_cast<uint64_t>(-(m + 1)) + 1, -1.0};
}

u128 phase(const TrigTerm& t, u128 x, u128 y) {
  return static_cast<u128>(static_cast<i128>(t.j)) * x + static_cast<u128>(static_cast<i128>(t.l)) * y;
}

std::complex<double> trig_multiplier(const TrigTerm& t, int ox, int oy) {
  std::complex<double> m(t.c, -t.s);
  std::complex<double> kx(0, 2 * kPi * t.j), ky(0, 2 * kPi * t.l);
  for (int i = 0; i < ox; ++i) m *= kx;
  for (int i = 0; i < oy; ++i) m *= ky;
  return m;
}

}  // namespace

json RoofSpec::to_json() const {
  json xj = json::array(), yj = json::array(), tr = json::array();
  for (const auto& j : x_jumps) xj.push_back({{"d", j.d}, {"at", j.at}});
  for (const auto& j : y_jumps) yj.push_back({{"d", j.d}, {"at", j.at}});
  for (const auto& t : trig) tr.push_back({{"j", t.j}, {"l", t.l}, {"c", t.c}, {"s", t.s}});
  return json{{"c0", c0}, {"x_jumps", xj}, {"y_jumps", yj}, {"trig", tr}, {"gamma", gamma}};
}

RoofSpec RoofSpec::from_json(const json& j) {
  reject_unknown(j, {"c0", "x_jumps", "y_jumps", "trig", "gamma"}, "roof");
  RoofSpec s;
  s.c0 = number(j, "c0", "roof");
  s.gamma = j.contains("gamma") ? number(j, "gamma", "roof") : 0.0;
  auto jumps = [&](const char* key, std::vector<Jump>& out) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_array()) throw ValidationError(std::string("roof: '") + key + "' must be an array");
    for (const auto& e : j.at(key)) {
      reject_unknown(e, {"d", "at"}, std::string("roof.") + key);
      Jump jp{number(e, "d", key), e.contains("at") ? number(e, "at", key) : 0.0};
      if (jp.at < 0 || jp.at >= 1) throw ValidationError("roof: jump position must lie in [0, 1)");
      out.push_back(jp);
    }
  };
  jumps("x_jumps", s.x_jumps);
  jumps("y_jumps", s.y_jumps);
  if (j.contains("trig")) {
    if (!j.at("trig").is_array()) throw ValidationError("roof: 'trig' must be an array");
    for (const auto& e : j.at("trig")) {
      reject_unknown(e, {"j", "l", "c", "s"}, "roof.trig");
      TrigTerm t;
      t.j = e.value("j", 0);
      t.l = e.value("l", 0);
      t.c = e.contains("c") ? number(e, "c", "trig") : 0.0;
      t.s = e.contains("s") ? number(e, "s", "trig") : 0.0;
      s.trig.push_back(t);
    }
  }
  return s;
}

RoofFunction RoofFunction::build(RoofSpec spec, const RotationVector2& rot) {
  RoofFunction f;
  f.spec_ = std::move(spec);
  f.rot_ = rot;
  f.alpha_ = to_double(rot.alpha_step());
  f.beta_ = to_double(rot.beta_step());
  for (const auto& j : f.spec_.x_jumps) {
    if (j.d == 0) throw ValidationError("roof: zero jump");
    f.xj_at_.push_back(frac_from_double(j.at));
  }
  for (const auto& j : f.spec_.y_jumps) {
    if (j.d == 0) throw ValidationError("roof: zero jump");
    f.yj_at_.push_back(frac_from_double(j.at));
  }
  auto add_line = [](std::vector<u128>& lines, std::vector<double>& errs, u128 v, double e) {
    for (std::size_t i = 0; i < lines.size(); ++i)
      if (lines[i] == v) {
        errs[i] = std::max(errs[i], e);
        return;
      }
    lines.push_back(v);
    errs.push_back(e);
  };
  for (u128 v : f.xj_at_) add_line(f.x_lines_, f.x_line_err_, v, 0.0);
  for (u128 v : f.yj_at_) add_line(f.y_lines_, f.y_line_err_, v, 0.0);
  if (f.has_h()) {
    add_line(f.x_lines_, f.x_line_err_, 0, 0.0);
    add_line(f.y_lines_, f.y_line_err_, 0, 0.0);
    add_line(f.y_lines_, f.y_line_err_, u128(0) - rot.beta_step().v, rot.beta_step().err);
  }

  double coef = 0;
  for (const auto& t : f.spec_.trig) {
    double a = std::hypot(t.c, t.s);
    double kj = 2 * kPi * std::abs(t.j), kl = 2 * kPi * std::abs(t.l);
    f.sup_gx_ += a * kj;
    f.sup_gy_ += a * kl;
    f.sup_gxx_ += a * kj * kj;
    f.sup_gyy_ += a * kl * kl;
    f.sup_gxy_ += a * kj * kl;
    coef += std::fabs(t.c) + std::fabs(t.s);
  }
  double sd1 = 0, sd2 = 0;
  for (const auto& j : f.spec_.x_jumps) sd1 += std::fabs(j.d);
  for (const auto& j : f.spec_.y_jumps) sd2 += std::fabs(j.d);
  double g = std::fabs(f.spec_.gamma);
  f.lip_ = sd1 + sd2 + f.sup_gx_ + f.sup_gy_ + g * (2 + f.alpha_);
  double scale = std::fabs(f.spec_.c0) + sd1 + sd2 + coef + g * (2 + 2 * f.alpha_);
  std::size_t terms = 1 + f.spec_.x_jumps.size() + f.spec_.y_jumps.size() + 2 * f.spec_.trig.size() + 3;
  f.eval_round_ = 4 * kU * scale * static_cast<double>(terms);

  Bounds b = f.certify_range(0, 1, 0, 1);
  if (!(b.lo > 0)) throw ValidationError("roof: cannot certify inf f > 0 (grid bound " + std::to_string(b.lo) + ")");
  f.inf_ = b.lo;
  f.sup_ = b.hi;

  // integral: closed form for all but h
  double integral = f.spec_.c0;
  for (const auto& j : f.spec_.x_jumps) integral += j.d / 2;
  for (const auto& j : f.spec_.y_jumps) integral += j.d / 2;
  for (const auto& t : f.spec_.trig)
    if (t.j == 0 && t.l == 0) integral += t.c;
  f.integral_err_ = 0;
  if (f.has_h()) {
    using boost::math::quadrature::gauss;
    double al = f.alpha_, be = f.beta_;
    auto tensor = [&](auto rule) {
      double total = 0;
      double cut = 1.0 - be;
      for (auto [y0, y1] : {std::pair{0.0, cut}, std::pair{cut, 1.0}}) {
        double ymid = 0.5 * (y0 + y1);
        double e = (ymid + be >= 1.0) ? 1.0 : 0.0;
        total += rule([&](double y) {
          return rule([&](double x) { return al * y - (x + al) * e; }, 0.0, 1.0);
        }, y0, y1);
      }
      return total;
    };
    double i7 = tensor([](auto fn, double a, double b) { return gauss<double, 7>::integrate(fn, a, b); });
    double i15 = tensor([](auto fn, double a, double b) { return gauss<double, 15>::integrate(fn, a, b); });
    f.integral_err_ = std::fabs(i7 - i15) + 8 * kU * (std::fabs(i15) + 1);
    if (f.integral_err_ > 1e-10) throw ValidationError("roof: quadrature of the h term did not converge");
    integral += f.spec_.gamma * i15;
  }
  f.integral_ = integral;
  return f;
}

bool RoofFunction::near_x_line(const Coord& x) const {
  for (std::size_t i = 0; i < x_lines_.size(); ++i) {
    double e = x.err + x_line_err_[i];
    if (e > 0 && circle_dist(x.v - x_lines_[i]) <= e) return true;
  }
  return false;
}

bool RoofFunction::near_y_line(const Coord& y) const {
  for (std::size_t i = 0; i < y_lines_.size(); ++i) {
    double e = y.err + y_line_err_[i];
    if (e > 0 && circle_dist(y.v - y_lines_[i]) <= e) return true;
  }
  return false;
}

double RoofFunction::g(const TorusPoint& p, int ox, int oy) const {
  double v = 0;
  for (const auto& t : spec_.trig) {
    double ph = 2 * kPi * signed_frac_to_double(phase(t, p.x.v, p.y.v));
    std::complex<double> z = trig_multiplier(t, ox, oy) * std::polar(1.0, ph);
    v += z.real();
  }
  return v;
}

double RoofFunction::eval(const TorusPoint& p) const {
  if (near_x_line(p.x) || near_y_line(p.y))
    throw PrecisionError("evaluation point within its error of a discontinuity line");
  double v = spec_.c0 - offset_;
  for (std::size_t i = 0; i < xj_at_.size(); ++i) v += spec_.x_jumps[i].d * frac_to_double(p.x.v - xj_at_[i]);
  for (std::size_t i = 0; i < yj_at_.size(); ++i) v += spec_.y_jumps[i].d * frac_to_double(p.y.v - yj_at_[i]);
  if (!spec_.trig.empty()) v += g(p);
  if (spec_.gamma != 0) {
    double x = frac_to_double(p.x.v), y = frac_to_double(p.y.v);
    double e = carry(p.y.v, rot_.beta_step().v) ? 1.0 : 0.0;
    v += spec_.gamma * (alpha_ * y - (x + alpha_) * e);
  }
  return v;
}

double RoofFunction::fx(const TorusPoint& p) const {
  double v = 0;
  for (const auto& j : spec_.x_jumps) v += j.d;
  if (!spec_.trig.empty()) v += g(p, 1, 0);
  if (spec_.gamma != 0) v -= spec_.gamma * (carry(p.y.v, rot_.beta_step().v) ? 1.0 : 0.0);
  return v;
}

double RoofFunction::fy(const TorusPoint& p) const {
  double v = 0;
  for (const auto& j : spec_.y_jumps) v += j.d;
  if (!spec_.trig.empty()) v += g(p, 0, 1);
  v += spec_.gamma * alpha_;
  return v;
}

double RoofFunction::piece_value(double x, double y, const std::vector<double>& n1, const std::vector<double>& n2,
                                 double e) const {
  double v = spec_.c0 - offset_;
  for (std::size_t i = 0; i < n1.size(); ++i) v += spec_.x_jumps[i].d * (x - spec_.x_jumps[i].at - n1[i]);
  for (std::size_t i = 0; i < n2.size(); ++i) v += spec_.y_jumps[i].d * (y - spec_.y_jumps[i].at - n2[i]);
  for (const auto& t : spec_.trig) {
    double ph = 2 * kPi * (t.j * x + t.l * y);
    v += t.c * std::cos(ph) + t.s * std::sin(ph);
  }
  if (spec_.gamma != 0) v += spec_.gamma * (alpha_ * y - (x + alpha_) * e);
  return v;
}

RoofFunction::Bounds RoofFunction::certify_range(double x0, double x1, double y0, double y1) const {
  std::vector<double> xs{x0, x1}, ys{y0, y1};
  for (u128 v : x_lines_) {
    double t = frac_to_double(v);
    if (t > x0 && t < x1) xs.push_back(t);
  }
  for (u128 v : y_lines_) {
    double t = frac_to_double(v);
    if (t > y0 && t < y1) ys.push_back(t);
  }
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  double lo = INFINITY, hi = -INFINITY;
  double sd1 = 0, sd2 = 0;
  for (const auto& j : spec_.x_jumps) sd1 += j.d;
  for (const auto& j : spec_.y_jumps) sd2 += j.d;
  for (std::size_t a = 0; a + 1 < xs.size(); ++a) {
    for (std::size_t b = 0; b + 1 < ys.size(); ++b) {
      double ax = xs[a], bx = xs[a + 1], ay = ys[b], by = ys[b + 1];
      if (bx <= ax || by <= ay) continue;
      double xm = 0.5 * (ax + bx), ym = 0.5 * (ay + by);
      std::vector<double> n1, n2;
      for (const auto& j : spec_.x_jumps) n1.push_back(std::floor(xm - j.at));
      for (const auto& j : spec_.y_jumps) n2.push_back(std::floor(ym - j.at));
      double e = (ym + beta_ >= 1.0) ? 1.0 : 0.0;
      double gx = std::fabs(sd1 - spec_.gamma * e) + sup_gx_;
      double gy = std::fabs(sd2 + spec_.gamma * alpha_) + sup_gy_;
      // without trigonometric terms each piece is affine and attains its extremes at the corners
      for (int G = spec_.trig.empty() ? 2 : 9;; G = 2 * G - 1) {
        double hx = (bx - ax) / (G - 1), hy = (by - ay) / (G - 1);
        double pmin = INFINITY, pmax = -INFINITY;
        for (int i = 0; i < G; ++i)
          for (int k = 0; k < G; ++k) {
            double v = piece_value(ax + i * hx, ay + k * hy, n1, n2, e);
            pmin = std::min(pmin, v);
            pmax = std::max(pmax, v);
          }
        double margin = (spec_.trig.empty() ? 0.0 : 0.5 * (gx * hx + gy * hy)) + eval_round_;
        if (margin < 0.01 * std::fabs(pmin) || G > 1000) {
          lo = std::min(lo, pmin - margin);
          hi = std::max(hi, pmax + margin);
          break;
        }
      }
    }
  }
  return {lo, hi};
}

double RoofFunction::inf_over(double x0, double x1, double y0, double y1) const {
  if (!(x0 >= 0 && x1 <= 1 && x0 < x1 && y0 >= 0 && y1 <= 1 && y0 < y1))
    throw ValidationError("rectangle must lie in [0, 1)^2 with positive size");
  return certify_range(x0, x1, y0, y1).lo;
}

RoofFunction RoofFunction::centered() const {
  RoofFunction c = *this;
  c.offset_ = integral_;
  c.inf_ = inf_ - integral_;
  c.sup_ = sup_ - integral_;
  return c;
}

VonNeumann RoofFunction::von_neumann() const {
  VonNeumann v;
  for (const auto& j : spec_.x_jumps) v.ix += j.d;
  for (const auto& j : spec_.y_jumps) v.iy += j.d;
  v.ix -= beta_ * spec_.gamma;
  v.iy += alpha_ * spec_.gamma;
  v.weak = v.ix != 0 || v.iy != 0;
  v.strong = v.ix != 0 && v.iy != 0;
  return v;
}

BirkhoffValue birkhoff(const RoofFunction& f, const TorusPoint& p, int64_t m) {
  BirkhoffValue out{m, 0, 0};
  if (m == 0) return out;
  Segment s = segment(f, p, m);
  Coord a = f.rotation().alpha_step(), b = f.rotation().beta_step();
  TorusPoint q = s.start;
  Neumaier acc;
  double abs_sum = 0, coord_err = 0;
  for (uint64_t k = 0; k < s.n; ++k) {
    double v;
    try {
      v = f.eval(q);
    } catch (const PrecisionError&) {
      throw PrecisionError("Birkhoff step k = " + std::to_string(k) + " straddles a discontinuity line");
    }
    acc.add(v);
    abs_sum += std::fabs(v);
    coord_err += q.x.err + q.y.err;
    q.x.v += a.v;
    q.x.err += a.err;
    q.y.v += b.v;
    q.y.err += b.err;
  }
  out.value = s.sign * acc.value();
  out.rounding_bound = static_cast<double>(s.n) * f.eval_rounding() + f.coord_sensitivity() * coord_err +
                       2 * kU * abs_sum;
  return out;
}

namespace {

void trig_sums(const RoofFunction& f, const TorusPoint& q, uint64_t n, int ox, int oy, double& value, double& rb) {
  Coord a = f.rotation().alpha_step(), b = f.rotation().beta_step();
  double nd = static_cast<double>(n);
  for (const auto& t : f.spec().trig) {
    double r = 0;
    std::complex<double> ps = phase_sum(phase(t, q.x.v, q.y.v), phase(t, a.v, b.v), n, &r);
    std::complex<double> mult = trig_multiplier(t, ox, oy);
    value += (mult * ps).real();
    double pe = std::abs(t.j) * q.x.err + std::abs(t.l) * q.y.err;
    double we = std::abs(t.j) * a.err + std::abs(t.l) * b.err;
    rb += std::abs(mult) * (r + 2 * kPi * nd * pe + kPi * nd * nd * we) + 4 * kU * std::abs(mult * ps);
  }
}

void sawtooth_part(const std::vector<Jump>& jumps, const std::vector<u128>& at, const Coord& start, const Coord& step,
                   uint64_t n, bool certify, double& value, double& rb) {
  for (std::size_t i = 0; i < jumps.size(); ++i) {
    OrbitSum s = sawtooth_sum(start.v - at[i], start.err, step.v, step.err, n, certify);
    if (certify && !s.certified) throw PrecisionError("orbit segment of length " + std::to_string(n) +
                                           " passes within its error of a jump line");
    value += jumps[i].d * s.value;
    rb += std::fabs(jumps[i].d) * s.err;
  }
}

// Certifies that no orbit point x + k a, k < n, is within error of a line.
void require_clear(const std::vector<u128>& lines, const std::vector<double>& errs, const Coord& start,
                   const Coord& step, uint64_t n, const char* what) {
  for (std::size_t i = 0; i < lines.size(); ++i) {
    OrbitSum s = sawtooth_sum(start.v - lines[i], start.err + errs[i], step.v, step.err, n);
    if (!s.certified)
      throw PrecisionError(std::string("orbit segment meets a ") + what + " discontinuity line within its error");
  }
}

}  // namespace

BirkhoffValue birkhoff_fast(const RoofFunction& f, const TorusPoint& p, int64_t m, bool certify) {
  BirkhoffValue out{m, 0, 0};
  if (m == 0) return out;
  Segment s = segment(f, p, m);
  const auto& spec = f.spec();
  Coord a = f.rotation().alpha_step(), b = f.rotation().beta_step();
  double nd = static_cast<double>(s.n);
  double value = nd * (spec.c0 - f.offset()), rb = 4 * kU * std::fabs(value);
  std::vector<u128> xat, yat;
  for (const auto& j : spec.x_jumps) xat.push_back(frac_from_double(j.at));
  for (const auto& j : spec.y_jumps) yat.push_back(frac_from_double(j.at));
  sawtooth_part(spec.x_jumps, xat, s.start.x, a, s.n, certify, value, rb);
  sawtooth_part(spec.y_jumps, yat, s.start.y, b, s.n, certify, value, rb);
  trig_sums(f, s.start, s.n, 0, 0, value, rb);
  if (f.has_h()) {
    Neumaier acc;
    TorusPoint q = s.start;
    double abs_sum = 0, coord_err = 0;
    for (uint64_t k = 0; k < s.n; ++k) {
      if (f.near_x_line(q.x) || f.near_y_line(q.y))
        throw PrecisionError("h term step k = " + std::to_string(k) + " straddles a discontinuity line");
      double x = frac_to_double(q.x.v), y = frac_to_double(q.y.v);
      double e = carry(q.y.v, b.v) ? 1.0 : 0.0;
      double v = f.alpha() * y - (x + f.alpha()) * e;
      acc.add(v);
      abs_sum += std::fabs(v);
      coord_err += q.x.err + q.y.err;
      q.x.v += a.v;
      q.x.err += a.err;
      q.y.v += b.v;
      q.y.err += b.err;
    }
    double g = spec.gamma;
    value += g * acc.value();
    rb += std::fabs(g) * (2 * kU * abs_sum + 8 * kU * nd * 3 + coord_err * (2 + f.alpha()));
  }
  out.value = s.sign * value;
  out.rounding_bound = rb + 2 * kU * std::fabs(value);
  return out;
}

namespace {

BirkhoffValue derivative_sum(const RoofFunction& f, const TorusPoint& p, int64_t m, int ox, int oy) {
  BirkhoffValue out{m, 0, 0};
  if (m == 0) return out;
  Segment s = segment(f, p, m);
  const auto& spec = f.spec();
  Coord a = f.rotation().alpha_step(), b = f.rotation().beta_step();
  double nd = static_cast<double>(s.n);
  double value = 0, rb = 0;
  if (ox > 0)
    require_clear(f.x_lines(), f.x_line_errors(), s.start.x, a, s.n, "vertical");
  else
    require_clear(f.y_lines(), f.y_line_errors(), s.start.y, b, s.n, "horizontal");
  if (ox == 1 && oy == 0) {
    double sd = 0;
    for (const auto& j : spec.x_jumps) sd += j.d;
    value += nd * sd;
    if (f.has_h()) {
      // sum of [{y_k} + beta] is the number of wraps of y + n beta
      WrapCount w = wrap_count(s.start.y.v, s.start.y.err, b.v, b.err, s.n);
      if (!w.certified) throw PrecisionError("carry count of the h term is ambiguous");
      value -= spec.gamma * w.count.get_d();
    }
  } else if (ox == 0 && oy == 1) {
    double sd = 0;
    for (const auto& j : spec.y_jumps) sd += j.d;
    value += nd * (sd + spec.gamma * f.alpha());
  }
  rb += 4 * kU * std::fabs(value);
  trig_sums(f, s.start, s.n, ox, oy, value, rb);
  out.value = s.sign * value;
  out.rounding_bound = rb;
  return out;
}

}  // namespace

BirkhoffValue birkhoff_dx(const RoofFunction& f, const TorusPoint& p, int64_t m) { return derivative_sum(f, p, m, 1, 0); }
BirkhoffValue birkhoff_dy(const RoofFunction& f, const TorusPoint& p, int64_t m) { return derivative_sum(f, p, m, 0, 1); }
BirkhoffValue birkhoff_dxx(const RoofFunction& f, const TorusPoint& p, int64_t m) { return derivative_sum(f, p, m, 2, 0); }
BirkhoffValue birkhoff_dyy(const RoofFunction& f, const TorusPoint& p, int64_t m) { return derivative_sum(f, p, m, 0, 2); }

double sup_g_derivative_sum(const RoofFunction& f, int order_x, int order_y, uint64_t m) {
  Coord a = f.rotation().alpha_step(), b = f.rotation().beta_step();
  double md = static_cast<double>(m), total = 0;
  for (const auto& t : f.spec().trig) {
    double mult = std::abs(trig_multiplier(t, order_x, order_y));
    u128 w = phase(t, a.v, b.v);
    double G = md;
    if (w != 0) {
      double r1 = signed_frac_to_double(w), rm = signed_frac_to_double(w * static_cast<u128>(m));
      G = std::min(md, std::fabs(std::sin(kPi * rm) / std::sin(kPi * r1)) * (1 + 8 * kU) +
                           kU * (2 + kPi) / std::fabs(std::sin(kPi * r1)));
    }
    double we = std::abs(t.j) * a.err + std::abs(t.l) * b.err;
    total += mult * (std::min(md, G + kPi * md * md * we));
  }
  return total * (1 + 8 * kU);
}

DerivativeBounds derivative_bounds(const RoofFunction& f, int64_t m_probe, int grid) {
  if (m_probe < 1 || grid < 1) throw ValidationError("derivative_bounds needs m_probe >= 1 and grid >= 1");
  DerivativeBounds db;
  db.m_probe = m_probe;
  db.grid = grid;
  VonNeumann vn = f.von_neumann();
  if (!vn.weak) throw ValidationError("derivative_bounds: both mean derivatives vanish (weak condition fails)");
  db.direction = vn.ix != 0 ? 'x' : 'y';
  double mesh = 1.0 / grid;
  db.margin_x = (f.sup_gxx() + f.sup_gxy()) * mesh / 2;
  db.margin_y = (f.sup_gyy() + f.sup_gxy()) * mesh / 2;
  db.Theta = std::max(f.sup_gxx(), f.sup_gyy());
  db.c = f.inf();
  db.C = f.sup();
  db.N_jump = static_cast<int>(f.x_lines().size());
  db.M_jump = static_cast<int>(f.y_lines().size());

  std::size_t pts = static_cast<std::size_t>(grid) * grid;
  std::size_t steps = static_cast<std::size_t>(2 * m_probe);
  std::vector<double> minx(pts), miny(pts), maxx(pts), maxy(pts);
  Coord a = f.rotation().alpha_step(), b = f.rotation().beta_step();
  auto walk = [&](std::size_t i, auto&& visit) {
    TorusPoint q = torus_point((i % grid + 0.5) * mesh, (i / grid + 0.5) * mesh);
    double sx = 0, sy = 0;
    for (std::size_t k = 0; k < steps; ++k) {
      sx += f.fx(q);
      sy += f.fy(q);
      visit(k + 1, std::fabs(sx) / static_cast<double>(k + 1), std::fabs(sy) / static_cast<double>(k + 1));
      q.x.v += a.v;
      q.y.v += b.v;
    }
  };
  parallel_for(pts, [&](std::size_t i) {
    double lx = INFINITY, ly = INFINITY, hx = 0, hy = 0;
    walk(i, [&](std::size_t m, double rx, double ry) {
      if (static_cast<int64_t>(m) < m_probe) return;
      lx = std::min(lx, rx);
      ly = std::min(ly, ry);
      hx = std::max(hx, rx);
      hy = std::max(hy, ry);
    });
    minx[i] = lx;
    miny[i] = ly;
    maxx[i] = hx;
    maxy[i] = hy;
  });
  db.theta_x = *std::min_element(minx.begin(), minx.end()) - db.margin_x;
  db.theta_y = *std::min_element(miny.begin(), miny.end()) - db.margin_y;
  bool primary_x = db.direction == 'x';
  db.theta = primary_x ? db.theta_x : db.theta_y;
  db.slope_upper = primary_x ? *std::max_element(maxx.begin(), maxx.end()) + db.margin_x
                             : *std::max_element(maxy.begin(), maxy.end()) + db.margin_y;
  if (!(db.theta > 0))
    throw ValidationError("derivative_bounds: theta <= 0 after the safety margin; probe longer or refine the grid");
  // m0: least m from which the bound holds at every grid point through 2 m_probe
  std::vector<int64_t> last_bad(pts, 0);
  double margin = primary_x ? db.margin_x : db.margin_y;
  parallel_for(pts, [&](std::size_t i) {
    int64_t bad = 0;
    walk(i, [&](std::size_t m, double rx, double ry) {
      double r = primary_x ? rx : ry;
      if (r - margin < db.theta) bad = static_cast<int64_t>(m);
    });
    last_bad[i] = bad;
  });
  db.m0 = 1 + *std::max_element(last_bad.begin(), last_bad.end());
  db.m0 = std::min<int64_t>(db.m0, m_probe);
  return db;
}

BirkhoffValue centered_sum_big(const RoofFunction& f, const TorusPoint& p, const mpz_class& m) {
  if (!f.pure_sawtooth()) throw ValidationError("large-index sums need a sawtooth-plus-constant roof");
  if (p.x.err != 0 || p.y.err != 0) throw ValidationError("large-index sums need exact start points");
  if (m < 0) throw ValidationError("large-index sums need m >= 0");
  BirkhoffValue out;
  out.n = m.fits_slong_p() ? m.get_si() : -1;
  unsigned W = std::max<unsigned>(f.rotation().bits, 2 * static_cast<unsigned>(mpz_sizeinbase(m.get_mpz_t(), 2)) + 64);
  RealRep a = eval_real(f.rotation().alpha, W), b = eval_real(f.rotation().beta, W);
  double value = 0, rb = 0;
  auto part = [&](const std::vector<Jump>& jumps, u128 start, const RealRep& step) {
    for (const auto& j : jumps) {
      OrbitSum s = centered_sawtooth_sum_big(start - frac_from_double(j.at), step, m);
      if (!s.certified) throw PrecisionError("large-index orbit meets a jump line within its error");
      value += j.d * s.value;
      rb += std::fabs(j.d) * s.err + 4 * kU * std::fabs(j.d * s.value);
    }
  };
  part(f.spec().x_jumps, p.x.v, a);
  part(f.spec().y_jumps, p.y.v, b);
  out.value = value;
  out.rounding_bound = rb;
  return out;
}

}  // namespace specflow
