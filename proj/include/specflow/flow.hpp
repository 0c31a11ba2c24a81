#pragma once

#include <cstdint>
#include <vector>

#include "specflow/roof.hpp"

namespace specflow {

// (x, y, s) with 0 <= s < f(x, y).
struct FlowPoint {
  TorusPoint p;
  double s = 0;
};

// Validates the height bound; throws ValidationError otherwise.
FlowPoint flow_point(const RoofFunction& f, const TorusPoint& p, double s);

struct FlowResult {
  FlowPoint point;
  int64_t n = 0;              // number of roof crossings (negative for backward time)
  double rounding_bound = 0;  // bound on the error of the new height
};

// T_t(x, s) = (T^n x, s + t - f^(n)(x)) with f^(n)(x) <= s + t < f^(n+1)(x).
// Throws PrecisionError when the new height is within rounding of 0 or of
// the roof (an exactly zero height is the identified point (Tx, 0)).
FlowResult flow_step(const RoofFunction& f, const FlowPoint& p, double t);
inline FlowPoint flow(const RoofFunction& f, const FlowPoint& p, double t) { return flow_step(f, p, t).point; }

// max(||x1 - x2||, ||y1 - y2||) + |s1 - s2|
double metric_df(const FlowPoint& a, const FlowPoint& b);

struct SampleSet {
  std::vector<FlowPoint> points;
  double acceptance_rate = 0;  // accepted / proposed
  uint64_t seed = 0;
};

// i.i.d. uniform points of the region under the roof, by rejection from
// the torus times [0, sup f). Sample i draws from stream (seed, i).
SampleSet uniform_sample(const RoofFunction& f, std::size_t count, uint64_t seed);

}  // namespace specflow
