#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>

#include "specflow/diagnostics.hpp"
#include "specflow/errors.hpp"
#include "specflow/fayad.hpp"
#include "specflow/flow.hpp"
#include "specflow/io.hpp"
#include "specflow/parallel.hpp"
#include "specflow/ratner.hpp"
#include "specflow/rng.hpp"
#include "specflow/roof.hpp"
#include "specflow/rotations.hpp"

namespace specflow {

namespace {

// Typed access to the operation parameters; unknown keys are rejected up front.
class Params {
 public:
  explicit Params(const ExperimentConfig& c) : j_(c.params) {
    const auto& allowed = operation_params(c.operation);
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
        throw ValidationError(c.operation + ": unknown parameter '" + it.key() + "'");
  }
  bool has(const char* k) const { return j_.contains(k) && !j_.at(k).is_null(); }
  double num(const char* k, double def) const { return has(k) ? get<double>(k) : def; }
  int64_t integer(const char* k, int64_t def) const { return has(k) ? get<int64_t>(k) : def; }
  bool flag(const char* k, bool def) const { return has(k) ? get<bool>(k) : def; }
  std::string str(const char* k, const std::string& def) const { return has(k) ? get<std::string>(k) : def; }
  std::vector<double> nums(const char* k, std::vector<double> def) const {
    if (!has(k)) return def;
    if (j_.at(k).is_array()) return get<std::vector<double>>(k);
    return {get<double>(k)};
  }
  const json& raw(const char* k) const { return j_.at(k); }

 private:
  template <class T>
  T get(const char* k) const {
    try {
      return j_.at(k).get<T>();
    } catch (const json::exception&) {
      throw ValidationError(std::string("parameter '") + k + "' has the wrong type");
    }
  }
  json j_;
};

struct Outcome {
  CsvWriter csv{{"empty"}};
  json results = json::object();
  bool pass = true;
  std::string plot;  // "using" clause for the gnuplot script
};

std::string bstr(bool b) { return b ? "true" : "false"; }
std::string istr(int64_t v) { return std::to_string(v); }

RoofSpec linear_roof() {
  RoofSpec s;
  s.c0 = 3;
  s.x_jumps = {{1, 0}};
  s.y_jumps = {{1.4142135623730951, 0}};
  return s;
}

RoofSpec sawtooth_roof() {
  RoofSpec s;
  s.c0 = 3;
  s.x_jumps = {{1, 0}};
  s.y_jumps = {{2, 0}};
  return s;
}

RotationVector2 config_rotation(const ExperimentConfig& c) {
  if (c.rotation.is_null())
    return RotationVector2::make(PartialQuotients::constant(1), PartialQuotients::constant(2), c.precision_bits);
  return RotationVector2::from_json(c.rotation, c.precision_bits);
}

RoofSpec config_roof(const ExperimentConfig& c, const RoofSpec& def) {
  return c.roof.is_null() ? def : RoofSpec::from_json(c.roof);
}

// "config" (the configured rotation), "palindromic" or "yoccoz".
RotationVector2 select_rotation(const ExperimentConfig& c, const Params& p) {
  std::string which = p.str("pair", "config");
  if (which == "config") return config_rotation(c);
  if (which == "palindromic") return palindromic_pair(256, std::max(c.precision_bits, 192u)).rotation;
  if (which == "yoccoz") return yoccoz_pair(GammaSchedule::linear(), 4, 1, std::max(c.precision_bits, 256u)).rotation;
  throw ValidationError("pair must be config, palindromic or yoccoz");
}

FlowSet flow_set(const json& j) {
  if (!j.is_array()) throw ValidationError("a flow set is an array of rectangles");
  FlowSet s;
  for (const auto& e : j) s.push_back(FlowRect::from_json(e));
  return s;
}

json flow_set_json(const FlowSet& s) {
  json a = json::array();
  for (const auto& r : s) a.push_back(r.to_json());
  return a;
}

std::vector<std::string> strings(const std::vector<mpz_class>& v) {
  std::vector<std::string> out;
  for (const auto& x : v) out.push_back(x.get_str());
  return out;
}

Outcome op_convergents(const ExperimentConfig& c) {
  Params p(c);
  auto rot = config_rotation(c);
  const int64_t n = p.integer("n", 20);
  if (n < 1) throw ValidationError("n must be at least 1");
  const auto& pq = p.str("coordinate", "alpha") == "beta" ? rot.beta : rot.alpha;
  auto cs = convergents(pq, static_cast<std::size_t>(n));
  Outcome o;
  o.csv = CsvWriter({"n", "a_n", "p_n", "q_n", "determinant", "coprime", "recurrence", "lower_ok", "upper_ok"});
  bool all = true;
  for (int64_t k = 1; k <= n; ++k) {
    const auto& cur = cs[k];
    const auto& prev = cs[k - 1];
    mpz_class det = cur.p * prev.q - prev.p * cur.q;
    mpz_class g;
    mpz_gcd(g.get_mpz_t(), cur.p.get_mpz_t(), cur.q.get_mpz_t());
    bool rec = k < 2 || cur.q == pq.at(k) * prev.q + cs[k - 2].q;
    auto aq = approx_quality(pq, static_cast<std::size_t>(k));
    bool det_ok = det == ((k % 2) ? 1 : -1);
    all = all && det_ok && g == 1 && rec && aq.lower_ok && aq.upper_ok;
    o.csv.row({istr(k), pq.at(k).get_str(), cur.p.get_str(), cur.q.get_str(), det.get_str(), bstr(g == 1), bstr(rec),
               bstr(aq.lower_ok), bstr(aq.upper_ok)});
  }
  o.pass = all;
  o.results = {{"n", n}, {"all_invariants", all}};
  o.plot = "1:4";
  return o;
}

Outcome op_palindromic(const ExperimentConfig& c) {
  Params p(c);
  auto pair = palindromic_pair(static_cast<std::size_t>(p.integer("terms", 64)), c.precision_bits);
  Outcome o;
  o.csv = CsvWriter({"prefix_length", "k", "q_alpha", "q_beta", "equal"});
  bool all = !pair.common_denominators.empty();
  for (std::size_t i = 0; i < pair.palindromic_prefix_lengths.size(); ++i) {
    std::size_t k = pair.palindromic_prefix_lengths[i] - 1;
    mpz_class qa = convergents(pair.rotation.alpha, k)[k].q;
    mpz_class qb = convergents(pair.rotation.beta, k)[k].q;
    bool eq = qa == qb && qa == pair.common_denominators[i];
    all = all && eq;
    o.csv.row({istr(static_cast<int64_t>(pair.palindromic_prefix_lengths[i])), istr(static_cast<int64_t>(k)),
               qa.get_str(), qb.get_str(), bstr(eq)});
  }
  o.pass = all;
  o.results = {{"prefix_lengths", pair.palindromic_prefix_lengths},
               {"common_denominators", strings(pair.common_denominators)},
               {"no_palindrome_warning", pair.no_palindrome_warning},
               {"assumption", pair.assumption},
               {"rotation", pair.rotation.to_json()}};
  o.plot = "1:2";
  return o;
}

Outcome op_yoccoz(const ExperimentConfig& c) {
  Params p(c);
  GammaSchedule g = p.has("gamma") ? GammaSchedule::from_json(p.raw("gamma")) : GammaSchedule::linear();
  const int64_t levels = p.integer("levels", 3);
  if (levels < 1) throw ValidationError("levels must be at least 1");
  auto pair = yoccoz_pair(g, static_cast<std::size_t>(levels), mpz_class(static_cast<long>(p.integer("a1", 1))),
                          std::max(c.precision_bits, 256u));
  Outcome o;
  o.csv = CsvWriter({"n", "q_n", "r_n", "first_ok", "second_ok"});
  bool all = true;
  for (std::size_t n = 0; n < pair.q.size(); ++n) {
    std::string f1, f2;
    if (n >= 1 && n <= pair.first_ok.size()) {
      f1 = bstr(pair.first_ok[n - 1]);
      f2 = bstr(pair.second_ok[n - 1]);
      all = all && pair.first_ok[n - 1] && pair.second_ok[n - 1];
    }
    o.csv.row({istr(static_cast<int64_t>(n)), pair.q[n].get_str(), pair.r[n].get_str(), f1, f2});
  }
  std::vector<bool> first(pair.first_ok.begin(), pair.first_ok.end()), second(pair.second_ok.begin(),
                                                                                  pair.second_ok.end());
  o.pass = all;
  o.results = {{"gamma", g.to_json()},
               {"levels", levels},
               {"q", strings(pair.q)},
               {"r", strings(pair.r)},
               {"first_ok", first},
               {"second_ok", second},
               {"rotation", pair.rotation.to_json()}};
  o.plot = "1:2";
  return o;
}

Outcome op_ergodicity(const ExperimentConfig& c) {
  Params p(c);
  auto rot = select_rotation(c, p);
  const int64_t K = p.integer("K", 50);
  if (K < 1) throw ValidationError("K must be at least 1");
  auto cert = ergodicity_check(rot, static_cast<unsigned>(K), rot.bits);
  Outcome o;
  o.csv = CsvWriter({"K", "bits", "verdict", "min_separation", "k", "l", "m"});
  o.csv.row({istr(K), istr(cert.bits), cert.verdict(), fmt_num(cert.min_separation), istr(cert.k), istr(cert.l),
             cert.m.get_str()});
  o.pass = !cert.relation_found;
  o.results = {{"K", K}, {"bits", cert.bits}, {"verdict", cert.verdict()}, {"min_separation", cert.min_separation}};
  return o;
}

Outcome op_birkhoff(const ExperimentConfig& c) {
  Params p(c);
  auto rot = config_rotation(c);
  auto f = RoofFunction::build(config_roof(c, linear_roof()), rot);
  TorusPoint pt = torus_point(p.num("x", 0.1), p.num("y", 0.2));
  Outcome o;
  o.csv = CsvWriter({"m", "direct", "direct_bound", "fast", "fast_bound", "agree"});
  bool all = true;
  for (double md : p.nums("m", {1, 10, 100, 1000, -50})) {
    int64_t m = static_cast<int64_t>(md);
    auto fast = birkhoff_fast(f, pt, m);
    std::string dv, db, agree = "";
    if (std::llabs(m) <= 1000000) {
      auto d = birkhoff(f, pt, m);
      bool ok = std::fabs(d.value - fast.value) <= d.rounding_bound + fast.rounding_bound;
      all = all && ok;
      dv = fmt_num(d.value);
      db = fmt_num(d.rounding_bound);
      agree = bstr(ok);
    }
    o.csv.row({istr(m), dv, db, fmt_num(fast.value), fmt_num(fast.rounding_bound), agree});
  }
  o.pass = all;
  o.results = {{"point", {p.num("x", 0.1), p.num("y", 0.2)}}, {"integral", f.integral()}, {"roof", f.spec().to_json()}};
  o.plot = "1:4";
  return o;
}

Outcome op_flow(const ExperimentConfig& c) {
  Params p(c);
  auto rot = config_rotation(c);
  auto f = RoofFunction::build(config_roof(c, linear_roof()), rot);
  FlowPoint start = flow_point(f, torus_point(p.num("x", 0.1), p.num("y", 0.2)), p.num("s", 0));
  Outcome o;
  o.csv = CsvWriter({"t", "x", "y", "s", "n", "rounding_bound", "inverse_residual"});
  bool all = true;
  double worst = 0;
  for (double t : p.nums("t", {0.5, 1, 10, 100, -3})) {
    auto r = flow_step(f, start, t);
    auto back = flow_step(f, r.point, -t);
    double res = metric_df(back.point, start);
    worst = std::max(worst, res);
    bool ok = res <= 2 * (r.rounding_bound + back.rounding_bound) + 1e-12;
    all = all && ok;
    o.csv.row({fmt_num(t), fmt_num(to_double(r.point.p.x)), fmt_num(to_double(r.point.p.y)), fmt_num(r.point.s),
               istr(r.n), fmt_num(r.rounding_bound), fmt_num(res)});
  }
  o.pass = all;
  o.results = {{"start", {p.num("x", 0.1), p.num("y", 0.2), p.num("s", 0)}}, {"worst_inverse_residual", worst}};
  o.plot = "1:4";
  return o;
}

Outcome op_exp_sum(const ExperimentConfig& c) {
  Params p(c);
  SliceDescriptor h;
  if (p.has("slice"))
    h = SliceDescriptor::from_json(p.raw("slice"));
  else
    h.slope = 10;
  auto e = exp_sum(h, p.num("theta", 0), static_cast<int>(p.integer("quad_points", 8)));
  Outcome o;
  o.csv = CsvWriter({"value", "quad_error", "bound", "theta", "N", "var_hprime"});
  o.csv.row({fmt_num(e.value), fmt_num(e.quad_error), fmt_num(e.sum_bound), fmt_num(e.theta), istr(e.N),
             fmt_num(e.var_hprime)});
  o.pass = e.pass;
  o.results = {{"slice", h.to_json()},
               {"value", e.value},
               {"quad_error", e.quad_error},
               {"bound", e.sum_bound},
               {"theta", e.theta},
               {"certified_theta", h.certified_theta()},
               {"N", e.N},
               {"var_hprime", e.var_hprime}};
  return o;
}

json bounds_json(const DerivativeBounds& db) {
  return {{"theta", db.theta},   {"theta_x", db.theta_x}, {"theta_y", db.theta_y}, {"direction", std::string(1, db.direction)},
          {"Theta", db.Theta},   {"slope_upper", db.slope_upper}, {"m0", db.m0}, {"c", db.c},
          {"C", db.C},           {"N_jump", db.N_jump},   {"M_jump", db.M_jump},   {"m_probe", db.m_probe},
          {"grid", db.grid}};
}

Outcome op_weak_mixing(const ExperimentConfig& c) {
  Params p(c);
  auto rot = config_rotation(c);
  auto f = RoofFunction::build(config_roof(c, linear_roof()), rot);
  auto db = derivative_bounds(f, p.integer("m_probe", 50), static_cast<int>(p.integer("grid", 8)));
  Outcome o;
  o.csv = CsvWriter({"n", "s", "numeric", "quad_error", "bound", "pass"});
  bool all = true;
  json extra;
  for (double nd : p.nums("n", {50, 100, 200}))
    for (double s : p.nums("s", {1, 2, 5, 10})) {
      auto w = weak_mixing_bound(f, db, s, static_cast<int64_t>(nd), static_cast<int>(p.integer("quad", 4)));
      all = all && w.pass;
      extra = {{"N", w.N}, {"fxx_norm", w.fxx_norm}, {"theta", w.theta}};
      o.csv.row({istr(static_cast<int64_t>(nd)), fmt_num(s), fmt_num(w.numeric), fmt_num(w.quad_error),
                 fmt_num(w.bound), bstr(w.pass)});
    }
  o.pass = all;
  o.results = {{"bounds", bounds_json(db)}, {"constants", extra}};
  o.plot = "1:3";
  return o;
}

Outcome op_level_set(const ExperimentConfig& c) {
  Params p(c);
  auto rot = config_rotation(c);
  RoofSpec def;
  def.c0 = 3;
  def.x_jumps = {{1, 0}};
  auto f = RoofFunction::build(config_roof(c, def), rot);
  auto db = derivative_bounds(f, p.integer("m_probe", 50), static_cast<int>(p.integer("grid", 8)));
  Outcome o;
  o.csv = CsvWriter({"t", "eps", "estimate", "uncertainty", "bound", "j_lo", "j_hi", "partial", "pass"});
  bool all = true;
  for (double t : p.nums("t", {50, 100}))
    for (double eps : p.nums("eps", {0.01, 0.02})) {
      auto e = level_set_measure(f, db, p.num("y", 0.3), t, eps, static_cast<int>(p.integer("x_grid", 2000)));
      all = all && e.pass;
      o.csv.row({fmt_num(t), fmt_num(eps), fmt_num(e.estimate), fmt_num(e.uncertainty), fmt_num(e.bound),
                 istr(e.j_lo), istr(e.j_hi), bstr(e.partial), bstr(e.pass)});
    }
  o.pass = all;
  o.results = {{"bounds", bounds_json(db)}, {"y", p.num("y", 0.3)}};
  o.plot = "1:3";
  return o;
}

Outcome op_correlate(const ExperimentConfig& c) {
  Params p(c);
  auto rot = select_rotation(c, p);
  auto f = RoofFunction::build(config_roof(c, sawtooth_roof()), rot);
  FlowSet A = p.has("A") ? flow_set(p.raw("A")) : FlowSet{{0.0, 0.5, 0.0, 0.5, 0.0, 1.0}};
  FlowSet B = p.has("B") ? flow_set(p.raw("B")) : A;
  auto series = correlation(f, A, B, p.nums("times", {0, 1, 10, 100}),
                            static_cast<std::size_t>(p.integer("samples", 20000)), c.seed);
  Outcome o;
  o.csv = CsvWriter({"t", "estimate", "stderr", "product"});
  bool all = true;
  for (std::size_t i = 0; i < series.times.size(); ++i) {
    double dev = series.estimates[i] - series.product;
    if (p.has("min_excess")) all = all && dev >= p.num("min_excess", 0);
    if (p.has("within")) all = all && std::fabs(dev) <= 3 * series.stderrs[i] + p.num("within", 0);
    o.csv.row({fmt_num(series.times[i]), fmt_num(series.estimates[i]), fmt_num(series.stderrs[i]),
               fmt_num(series.product)});
  }
  o.pass = all;
  o.results = {{"A", flow_set_json(A)}, {"B", flow_set_json(B)}, {"mu_a", series.mu_a}, {"mu_b", series.mu_b},
               {"product", series.product}, {"samples", series.samples}, {"integral", f.integral()}};
  o.plot = "1:2";
  return o;
}

std::vector<mpz_class> denominators_param(const Params& p, const PalindromicPair& pair, std::size_t count) {
  if (p.has("denominators")) {
    std::vector<mpz_class> out;
    for (const auto& e : p.raw("denominators"))
      out.emplace_back(e.is_string() ? e.get<std::string>() : std::to_string(e.get<int64_t>()));
    return out;
  }
  if (pair.common_denominators.size() < count)
    throw DepthError("only " + std::to_string(pair.common_denominators.size()) + " common denominators available");
  return {pair.common_denominators.begin(), pair.common_denominators.begin() + static_cast<long>(count)};
}

Outcome op_rigidity(const ExperimentConfig& c) {
  Params p(c);
  auto pair = palindromic_pair(static_cast<std::size_t>(p.integer("terms", 256)), std::max(c.precision_bits, 192u));
  auto f = RoofFunction::build(config_roof(c, sawtooth_roof()), pair.rotation);
  auto ls = denominators_param(p, pair, static_cast<std::size_t>(p.integer("count", 5)));
  auto rows = rigidity_scan(f, ls, static_cast<std::size_t>(p.integer("samples", 1000)), c.seed);
  Outcome o;
  o.csv = CsvWriter({"l", "max_deviation", "rounding", "threshold", "pass"});
  bool all = true;
  for (const auto& r : rows) {
    all = all && r.pass;
    o.csv.row({r.l.get_str(), fmt_num(r.max_deviation), fmt_num(r.rounding), fmt_num(r.threshold), bstr(r.pass)});
  }
  o.pass = all;
  o.results = {{"denominators", strings(ls)}, {"integral", f.integral()}, {"rotation", pair.rotation.to_json()}};
  o.plot = "0:2";
  return o;
}

Outcome op_distribution(const ExperimentConfig& c) {
  Params p(c);
  auto pair = palindromic_pair(static_cast<std::size_t>(p.integer("terms", 256)), std::max(c.precision_bits, 192u));
  auto f = RoofFunction::build(config_roof(c, sawtooth_roof()), pair.rotation);
  mpz_class l;
  if (p.has("l")) {
    l = mpz_class(p.str("l", "1"));
  } else {
    auto idx = static_cast<std::size_t>(p.integer("index", 2));
    if (idx >= pair.common_denominators.size()) throw DepthError("index past the available common denominators");
    l = pair.common_denominators[idx];
  }
  auto d = empirical_distribution(f, l, static_cast<int>(p.integer("bins", 20)),
                                  static_cast<std::size_t>(p.integer("samples", 10000)), c.seed);
  Outcome o;
  o.csv = CsvWriter({"bin_lo", "bin_hi", "mass"});
  for (std::size_t i = 0; i < d.masses.size(); ++i)
    o.csv.row({fmt_num(d.edges[i]), fmt_num(d.edges[i + 1]), fmt_num(d.masses[i])});
  o.pass = d.outside_fraction == 0;
  o.results = {{"l", l.get_str()}, {"V", d.V}, {"mean", d.mean}, {"outside_fraction", d.outside_fraction},
               {"samples", d.samples}};
  o.plot = "1:3";
  return o;
}

json partition_json(const PartialPartition& pp) {
  return {{"level", pp.level},           {"direction", std::string(1, pp.direction)},
          {"cells", pp.size()},          {"translates", pp.translates.get_str()},
          {"threshold", pp.threshold},   {"mass", pp.mass},
          {"mass_floor", pp.mass_floor}, {"max_length", pp.max_length},
          {"length_ceiling", pp.length_ceiling}, {"mass_ok", pp.mass_ok},
          {"length_ok", pp.length_ok}};
}

Outcome op_fayad(const ExperimentConfig& c) {
  Params p(c);
  GammaSchedule g = p.has("gamma") ? GammaSchedule::from_json(p.raw("gamma")) : GammaSchedule::linear();
  auto pair = yoccoz_pair(g, static_cast<std::size_t>(p.integer("levels", 4)), 1, std::max(c.precision_bits, 256u));
  auto f = RoofFunction::build(config_roof(c, sawtooth_roof()), pair.rotation);
  auto db = derivative_bounds(f, p.integer("m_probe", 100), static_cast<int>(p.integer("grid", 8)));
  const auto n = static_cast<std::size_t>(p.integer("n", 2));
  auto parts = fayad_partitions(f, pair, n);
  auto rep = fayad_check(f, pair, db, n, static_cast<int>(p.integer("m_samples", 20)),
                         static_cast<int>(p.integer("cell_samples", 100)),
                         static_cast<int>(p.integer("transverse_samples", 1)), c.seed);
  Outcome o;
  o.csv = CsvWriter({"level", "m", "cell", "cell_start", "cell_length", "transverse", "derivative_mid", "inf_lower",
                     "second_upper", "stretch_ok", "curvature_ok"});
  for (const auto& pr : rep.probes)
    o.csv.row({istr(pr.level), istr(pr.m), istr(static_cast<int64_t>(pr.cell)), fmt_num(pr.cell_start),
               fmt_num(pr.cell_length), fmt_num(pr.transverse), fmt_num(pr.derivative_mid), fmt_num(pr.inf_lower),
               fmt_num(pr.second_upper), bstr(pr.stretch_ok), bstr(pr.curvature_ok)});
  bool parts_ok = parts.even.mass_ok && parts.even.length_ok && parts.odd.mass_ok && parts.odd.length_ok;
  o.pass = rep.all_pass && parts_ok;
  auto level_json = [](const FayadLevel& l) {
    return json{{"level", l.level},       {"tau", l.tau},
                {"eps", l.eps},           {"k", l.k},
                {"m_lo", l.m_lo},         {"m_hi", l.m_hi},
                {"window_ok", l.window_ok}, {"probes", l.probes},
                {"stretch_pass", l.stretch_pass}, {"curvature_pass", l.curvature_pass},
                {"worst_stretch_margin", l.worst_stretch_margin},
                {"worst_curvature_margin", l.worst_curvature_margin}};
  };
  o.results = {{"n", n},
               {"theta", rep.theta},
               {"Theta", rep.Theta},
               {"gamma_n", rep.gamma_n},
               {"m0", rep.m0},
               {"partitions", {partition_json(parts.even), partition_json(parts.odd)}},
               {"even", level_json(rep.even)},
               {"odd", level_json(rep.odd)},
               {"coverage", rep.coverage},
               {"bounds", bounds_json(db)}};
  o.plot = "2:8";
  return o;
}

Outcome op_crossings(const ExperimentConfig& c) {
  Params p(c);
  auto rot = config_rotation(c);
  Coord a = p.str("coordinate", "alpha") == "beta" ? rot.beta_step() : rot.alpha_step();
  auto ds = p.nums("d", {1e-2, 1e-3, 1e-4, 1e-5});
  auto starts = p.nums("starts", {0.1, 0.45, 0.77});
  const int64_t want = p.integer("crossings", 20);
  if (want < 3) throw ValidationError("crossings must be at least 3");

  struct Run {
    double d, x;
    SparseSequence seq;
    SparsenessVerdict stats;
  };
  std::vector<Run> runs;
  std::vector<double> min_d, max_d;
  for (double d : ds) {
    double mn = 1e300, mx = 0;
    for (double x : starts) {
      auto full = crossing_sequence(a, lifted(x), lifted(x + d), static_cast<int64_t>(std::ceil(4.0 * want / d)));
      if (static_cast<int64_t>(full.k.size()) <= want) throw PrecisionError("too few crossings in the scan");
      // cut right after the want-th crossing
      std::vector<int8_t> v(full.values.begin(), full.values.begin() + full.k[want] + 1);
      auto seq = SparseSequence::from_values(std::move(v));
      auto st = sparseness_check(seq, 0, 1e300);
      int64_t first = seq.k[1];
      mn = std::min(mn, st.min_gap * d);
      mx = std::max({mx, st.max_gap * d, first * d});
      runs.push_back({d, x, std::move(seq), st});
    }
    min_d.push_back(mn);
    max_d.push_back(mx);
  }
  double C1 = *std::min_element(min_d.begin(), min_d.end());
  double C2 = *std::max_element(max_d.begin(), max_d.end());
  auto spread = [](const std::vector<double>& v) {
    return *std::max_element(v.begin(), v.end()) / *std::min_element(v.begin(), v.end());
  };
  Outcome o;
  o.csv = CsvWriter({"d", "start", "crossings", "min_gap", "max_gap", "min_gap_d", "max_gap_d", "a_sparse",
                     "ab_sparse", "sum_ratio"});
  bool all = spread(min_d) < 2 && spread(max_d) < 2;
  for (const auto& r : runs) {
    auto v = sparseness_check(r.seq, C1 / r.d, C2 / r.d);
    auto s = sparse_sum_bound(r.seq, C1 / r.d);
    all = all && v.ab_sparse && s.pass;
    o.csv.row({fmt_num(r.d), fmt_num(r.x), istr(static_cast<int64_t>(v.crossings)), istr(v.min_gap),
               istr(v.max_gap), fmt_num(v.min_gap * r.d), fmt_num(v.max_gap * r.d), bstr(v.a_sparse),
               bstr(v.ab_sparse), fmt_num(s.worst_ratio)});
  }
  o.pass = all;
  o.results = {{"C1", C1}, {"C2", C2}, {"min_gap_d", min_d}, {"max_gap_d", max_d},
               {"min_spread", spread(min_d)}, {"max_spread", spread(max_d)}};
  o.plot = "1:6";
  return o;
}

Outcome op_identity(const ExperimentConfig& c) {
  Params p(c);
  auto rot = config_rotation(c);
  auto f = RoofFunction::build(config_roof(c, linear_roof()), rot);
  auto model = build_cocycle_model(f, rot);
  std::string which = p.str("which", "all");
  std::vector<std::pair<Identity, std::string>> ids;
  if (which == "all" || which == "sawtooth") ids.push_back({Identity::Sawtooth, "sawtooth"});
  if (which == "all" || which == "heisenberg") ids.push_back({Identity::Heisenberg, "heisenberg"});
  if (which == "all" || which == "master") ids.push_back({Identity::Master, "master"});
  if (ids.empty()) throw ValidationError("which must be all, sawtooth, heisenberg or master");
  const auto trials = static_cast<std::size_t>(p.integer("trials", 1000));
  const int64_t n_max = p.integer("n_max", 10000);
  const double dlo = p.num("d_min", 1e-6), dhi = p.num("d_max", 0.1);
  if (n_max < 0 || !(dlo > 0 && dlo <= dhi && dhi < 0.5)) throw ValidationError("bad identity ranges");

  struct Row {
    int64_t n;
    double d;
    std::vector<IdentityResidual> r;
  };
  std::vector<Row> rows(trials);
  parallel_for(trials, [&](std::size_t i) {
    Philox rng(c.seed, i);
    double x = rng.uniform(-2, 2), y = rng.uniform(-2, 2);
    double d = std::exp(rng.uniform(std::log(dlo), std::log(dhi)));
    double xp = x + (rng.uniform() < 0.5 ? d : -d), yp = y + d * rng.uniform(-1, 1);
    int64_t n = static_cast<int64_t>(rng.next_u64() % static_cast<uint64_t>(n_max + 1));
    auto pr = lift_pair(x, y, xp, yp);
    rows[i].n = n;
    rows[i].d = d;
    for (const auto& id : ids) rows[i].r.push_back(cocycle_identity_residual(model, f, pr, n, id.first));
  });
  Outcome o;
  o.csv = CsvWriter({"trial", "identity", "n", "d", "lhs", "rhs", "residual", "tolerance", "pass"});
  bool all = true;
  double worst = 0;
  for (std::size_t i = 0; i < trials; ++i)
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const auto& r = rows[i].r[k];
      double tol = 1e-9 * (1 + static_cast<double>(rows[i].n));
      bool ok = r.residual <= tol;
      all = all && ok;
      worst = std::max(worst, r.residual / tol);
      o.csv.row({istr(static_cast<int64_t>(i)), ids[k].second, istr(rows[i].n), fmt_num(rows[i].d), fmt_num(r.lhs),
                 fmt_num(r.rhs), fmt_num(r.residual), fmt_num(tol), bstr(ok)});
    }
  o.pass = all;
  o.results = {{"trials", trials}, {"n_max", n_max}, {"worst_residual_over_tolerance", worst},
               {"model", model.to_json()}};
  o.plot = "3:7";
  return o;
}

Outcome op_ratner(const ExperimentConfig& c) {
  Params p(c);
  auto rot = config_rotation(c);
  auto f = RoofFunction::build(config_roof(c, linear_roof()), rot);
  auto model = build_cocycle_model(f, rot);
  const auto pairs = static_cast<std::size_t>(p.integer("pairs", 100));
  const double eps = p.num("eps", 0.1), dlo = p.num("d_min", 1e-5), dhi = p.num("d_max", 1e-3);
  const int64_t N = p.integer("N", 2);
  const auto n_emp = static_cast<std::size_t>(p.integer("empirical", 10));
  if (!(dlo > 0 && dlo <= dhi && dhi < 0.5)) throw ValidationError("bad distance range");

  std::vector<RatnerWitness> ws(pairs);
  std::vector<int> agree(pairs, -1);
  parallel_for(pairs, [&](std::size_t i) {
    Philox rng(c.seed, i);
    double x = rng.uniform(), y = rng.uniform();
    double d = std::exp(rng.uniform(std::log(dlo), std::log(dhi)));
    double dx = d, dy = d * rng.uniform(-1, 1);
    if (rng.uniform() < 0.5) std::swap(dx, dy);
    if (rng.uniform() < 0.5) dx = -dx;
    TorusPoint a = torus_point(x, y), b = torus_point(x + dx, y + dy);
    ws[i] = witness_constructive(model, f, a, b, eps, N);
    if (i < n_emp && ws[i].status == RatnerWitness::Status::Ok) {
      const auto& w = ws[i];
      auto e = witness_empirical(f, a, b, w.eps_used, std::max<int64_t>(0, w.M - w.L / 2), w.M + w.L / 2, w.L, 1,
                                 model.p0);
      agree[i] = std::fabs(e.p - w.p) < w.eps_used && e.good_fraction > 1 - w.eps_used;
    }
  });
  Outcome o;
  o.csv = CsvWriter({"d", "M", "L", "p", "good_fraction", "pass"});
  bool all = true;
  std::size_t valid = 0, agreed = 0, checked = 0;
  for (std::size_t i = 0; i < pairs; ++i) {
    const auto& w = ws[i];
    bool ok = w.status == RatnerWitness::Status::Ok && w.valid && w.M_in_range && w.good_bound && w.eq25;
    valid += ok;
    if (agree[i] >= 0) {
      ++checked;
      agreed += agree[i];
      ok = ok && agree[i];
    }
    all = all && ok;
    o.csv.row({fmt_num(w.d), istr(w.M), istr(w.L), fmt_num(w.p), fmt_num(w.good_fraction), bstr(ok)});
  }
  o.pass = all;
  json first = pairs ? ws[0].to_json() : json();
  o.results = {{"model", model.to_json()},
               {"pairs", pairs},
               {"valid", valid},
               {"empirical_checked", checked},
               {"empirical_agreed", agreed},
               {"eps", eps},
               {"eps_used", pairs ? ws[0].eps_used : eps},
               {"kappa", pairs ? ws[0].kappa : 0.0},
               {"N", N},
               {"first_witness", first}};
  o.plot = "1:2";
  return o;
}

const std::map<std::string, std::function<Outcome(const ExperimentConfig&)>>& handlers() {
  static const std::map<std::string, std::function<Outcome(const ExperimentConfig&)>> h{
      {"convergents", op_convergents}, {"palindromic-pair", op_palindromic}, {"yoccoz", op_yoccoz},
      {"ergodicity", op_ergodicity},   {"birkhoff", op_birkhoff},            {"flow", op_flow},
      {"exp-sum", op_exp_sum},         {"weak-mixing", op_weak_mixing},      {"level-set", op_level_set},
      {"correlate", op_correlate},     {"rigidity", op_rigidity},            {"distribution", op_distribution},
      {"fayad", op_fayad},             {"crossings", op_crossings},          {"identity", op_identity},
      {"ratner-witness", op_ratner}};
  return h;
}

}  // namespace

int run(const ExperimentConfig& config, std::ostream& log) {
  json summary{{"operation", config.operation},
               {"config_hash", config.hash()},
               {"seed", config.seed},
               {"precision_bits", config.precision_bits},
               {"threads", config.threads},
               {"inputs", config.to_json()}};
  int code = 0;
  unsigned saved = thread_cap();
  thread_cap() = config.threads;
  try {
    auto it = handlers().find(config.operation);
    if (it == handlers().end()) throw ValidationError("unknown operation '" + config.operation + "'");
    Outcome o = it->second(config);
    o.csv.write(config.csv_path());
    summary["results"] = o.results;
    summary["pass"] = o.pass;
    summary["csv"] = config.csv_path();
    summary["rows"] = o.csv.rows();
    if (config.plot_script && !o.plot.empty()) {
      std::string script = "set datafile separator ','\nset key autotitle columnhead\nplot '" + config.csv_path() +
                           "' using " + o.plot + " with linespoints\n";
      write_text(config.summary_path() + ".gp", script);
    }
    code = o.pass ? 0 : 1;
    log << config.operation << ": " << (o.pass ? "pass" : "FAIL") << " (" << o.csv.rows() << " rows, "
        << config.csv_path() << ")\n";
  } catch (const PrecisionError& e) {
    code = 3;
    summary["error"] = {{"kind", "precision"}, {"message", e.what()}};
    log << "precision error: " << e.what() << '\n';
  } catch (const ValidationError& e) {
    code = 2;
    summary["error"] = {{"kind", "validation"}, {"message", e.what()}};
    log << "validation error: " << e.what() << '\n';
  } catch (const json::exception& e) {
    code = 2;
    summary["error"] = {{"kind", "validation"}, {"message", e.what()}};
    log << "validation error: " << e.what() << '\n';
  }
  thread_cap() = saved;
  summary["exit_code"] = code;
  try {
    write_text(config.summary_path(), summary.dump(2) + "\n");
  } catch (const ValidationError& e) {
    log << e.what() << '\n';
    if (code == 0) code = 2;
  }
  return code;
}

}  // namespace specflow
