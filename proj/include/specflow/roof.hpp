#pragma once

#include <cstdint>
#include <vector>

#include "specflow/fixed.hpp"
#include "specflow/rotations.hpp"

namespace specflow {

// d * {t - at}
struct Jump {
  double d = 0;
  double at = 0;
};

// c cos 2pi(j x + l y) + s sin 2pi(j x + l y)
struct TrigTerm {
  int j = 0, l = 0;
  double c = 0, s = 0;
};

// f(x, y) = c0 + sum d1 {x - D1} + sum d2 {y - D2} + g(x, y) + gamma h(x, y)
// with h = alpha {y} - ({x} + alpha) [{y} + beta].
struct RoofSpec {
  double c0 = 0;
  std::vector<Jump> x_jumps, y_jumps;
  std::vector<TrigTerm> trig;
  double gamma = 0;

  json to_json() const;
  static RoofSpec from_json(const json& j);
};

struct BirkhoffValue {
  int64_t n = 0;
  double value = 0;
  double rounding_bound = 0;
};

struct VonNeumann {
  double ix = 0, iy = 0;  // means of f_x and f_y over the torus
  bool weak = false;      // ix != 0 or iy != 0
  bool strong = false;    // both nonzero
};

struct DerivativeBounds {
  double theta = 0;        // lower slope bound in the primary direction
  double theta_x = 0, theta_y = 0;
  char direction = 'x';    // primary direction: the one with nonzero mean derivative
  double Theta = 0;        // max(sup |f_xx|, sup |f_yy|) on smooth pieces
  double slope_upper = 0;  // upper bound of |(f_x)^(m)| / m over the probe, primary direction
  double margin_x = 0, margin_y = 0;
  int64_t m0 = 0;
  double c = 0, C = 0;     // certified inf f and sup f
  int N_jump = 0, M_jump = 0;
  int64_t m_probe = 0;
  int grid = 0;
};

class RoofFunction {
 public:
  static RoofFunction build(RoofSpec spec, const RotationVector2& rot);

  const RoofSpec& spec() const { return spec_; }
  const RotationVector2& rotation() const { return rot_; }

  // Right-continuous evaluation. Throws PrecisionError when the point's
  // error box straddles a discontinuity line.
  double eval(const TorusPoint& p) const;
  double eval(double x, double y) const { return eval(torus_point(x, y)); }

  // Derivatives on the smooth pieces (right-continuous piece choice).
  double fx(const TorusPoint& p) const;
  double fy(const TorusPoint& p) const;

  double inf() const { return inf_; }  // certified lower bound
  double sup() const { return sup_; }  // certified upper bound
  double integral() const { return integral_ - offset_; }
  double integral_error() const { return integral_err_; }
  double offset() const { return offset_; }
  RoofFunction centered() const;  // f - integral(f)

  VonNeumann von_neumann() const;
  bool pure_sawtooth() const { return spec_.trig.empty() && spec_.gamma == 0; }
  bool has_h() const { return spec_.gamma != 0; }

  // Discontinuity lines as 128-bit positions (distinct).
  const std::vector<u128>& x_lines() const { return x_lines_; }
  const std::vector<u128>& y_lines() const { return y_lines_; }
  const std::vector<double>& x_line_errors() const { return x_line_err_; }
  const std::vector<double>& y_line_errors() const { return y_line_err_; }
  // True when the point's error box straddles a discontinuity line.
  bool near_x_line(const Coord& x) const;
  bool near_y_line(const Coord& y) const;
  // Smooth part g and its partials of the given orders.
  double g(const TorusPoint& p, int ox = 0, int oy = 0) const;

  double sup_gx() const { return sup_gx_; }
  double sup_gy() const { return sup_gy_; }
  double sup_gxx() const { return sup_gxx_; }
  double sup_gyy() const { return sup_gyy_; }
  double sup_gxy() const { return sup_gxy_; }
  double lipschitz_g() const { return sup_gx_ + sup_gy_; }  // for the max metric
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }

  // Per-step evaluation error of eval() at unit coordinate error.
  double coord_sensitivity() const { return lip_; }
  double eval_rounding() const { return eval_round_; }

  // Infimum of f over a rectangle [x0, x1) x [y0, y1), certified by grid plus margin.
  double inf_over(double x0, double x1, double y0, double y1) const;

 private:
  RoofSpec spec_;
  RotationVector2 rot_;
  double alpha_ = 0, beta_ = 0;
  std::vector<u128> xj_at_, yj_at_;
  std::vector<u128> x_lines_, y_lines_;
  std::vector<double> x_line_err_, y_line_err_;
  double inf_ = 0, sup_ = 0, integral_ = 0, integral_err_ = 0, offset_ = 0;
  double sup_gx_ = 0, sup_gy_ = 0, sup_gxx_ = 0, sup_gyy_ = 0, sup_gxy_ = 0;
  double lip_ = 0, eval_round_ = 0;

  struct Bounds {
    double lo, hi;
  };
  Bounds certify_range(double x0, double x1, double y0, double y1) const;
  double piece_value(double x, double y, const std::vector<double>& n1, const std::vector<double>& n2,
                     double e) const;
};

// f^(m)(p) by direct compensated summation, including the m < 0 branch.
BirkhoffValue birkhoff(const RoofFunction& f, const TorusPoint& p, int64_t m);

// The same value via closed forms for the sawtooth and trigonometric parts
// (the h part, when present, is still summed step by step).
// With certify = false the sawtooth parts skip the wrap-ambiguity check
// (for searches whose final answer is re-checked with certification).
BirkhoffValue birkhoff_fast(const RoofFunction& f, const TorusPoint& p, int64_t m, bool certify = true);

// Birkhoff sums of f_x, f_y, f_xx, f_yy in closed form. Throw PrecisionError
// when the orbit segment comes within its error of a relevant discontinuity.
BirkhoffValue birkhoff_dx(const RoofFunction& f, const TorusPoint& p, int64_t m);
BirkhoffValue birkhoff_dy(const RoofFunction& f, const TorusPoint& p, int64_t m);
BirkhoffValue birkhoff_dxx(const RoofFunction& f, const TorusPoint& p, int64_t m);
BirkhoffValue birkhoff_dyy(const RoofFunction& f, const TorusPoint& p, int64_t m);

// sup over the whole torus of |(g_xx)^(m)| (resp. g_yy, g_xxx, g_yyy): exact
// modulus bound from the geometric phase sums.
double sup_g_derivative_sum(const RoofFunction& f, int order_x, int order_y, uint64_t m);

DerivativeBounds derivative_bounds(const RoofFunction& f, int64_t m_probe, int grid);

// f^(m) - m integral(f) for sawtooth-plus-constant roofs at huge m (exact sums).
BirkhoffValue centered_sum_big(const RoofFunction& f, const TorusPoint& p, const mpz_class& m);

}  // namespace specflow
