#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <vector>

#include "specflow/roof.hpp"
#include "specflow/rotations.hpp"

namespace specflow {

// Intervals [start, start + length) on the circle, in units of 2^-128.
struct PartialPartition {
  int level = 0;                 // 2n or 2n + 1
  char direction = 'x';
  std::vector<u128> start, length;
  mpz_class translates = 0;      // J: translates a_l - j w with j < J per line
  double threshold = 0;          // cells kept iff |I| > threshold
  double mass = 0;               // sum |C_i|
  double max_length = 0;
  double mass_floor = 0;         // 1 - 2 N / sqrt(gamma(n))
  double length_ceiling = 0;     // 2 / q_n (resp. 2 / r_n)
  bool mass_ok = false, length_ok = false;
  std::size_t size() const { return start.size(); }
  double cell_length(std::size_t i) const { return frac_to_double(length[i]); }
};

struct FayadPartitions {
  PartialPartition even, odd;  // eta_{2n} (x) and eta_{2n+1} (y)
};

// eta_{2n} from the points a_l - j alpha, j < q_n ceil(q_{n+1} / (gamma(n) q_n)),
// keeping cells longer than 1 / (sqrt(gamma(n)) q_n); eta_{2n+1} likewise with beta and r_n.
FayadPartitions fayad_partitions(const RoofFunction& f, const YoccozPair& pair, std::size_t n);

struct FayadProbe {
  int level = 0;
  int64_t m = 0;
  std::size_t cell = 0;
  double cell_start = 0, cell_length = 0, transverse = 0;
  double derivative_mid = 0;  // f_x^(m) (resp. f_y^(m)) at the cell midpoint
  double inf_lower = 0;       // certified lower bound of inf over the cell of |f_x^(m)|
  double second_upper = 0;    // certified upper bound of sup over the cell of |f_xx^(m)|
  bool stretch_ok = false;    // k <= inf |f_x^(m)| |C|
  bool curvature_ok = false;  // sup |f_xx^(m)| |C| <= eps inf |f_x^(m)|
};

struct FayadLevel {
  int level = 0;
  double tau = 0, eps = 0, k = 0;
  double m_lo = 0, m_hi = 0;       // sampled window for m
  bool window_ok = false;          // every discontinuity index j < m_hi lies below J, and m0 < m_lo
  double mass = 0, max_length = 0;
  std::size_t cells = 0;
  std::size_t probes = 0, stretch_pass = 0, curvature_pass = 0;
  double worst_stretch_margin = 0;     // min of inf |f'| |C| - k
  double worst_curvature_margin = 0;   // min of eps inf |f'| - sup |f''| |C|
};

struct FayadReport {
  std::size_t n = 0;
  double theta = 0, Theta = 0, gamma_n = 0;
  int64_t m0 = 0;
  FayadLevel even, odd;
  std::vector<FayadProbe> probes;
  bool all_pass = false;
  std::string coverage;  // which m, cells and transverse coordinates were examined
};

FayadReport fayad_check(const RoofFunction& f, const YoccozPair& pair, const DerivativeBounds& db, std::size_t n,
                        int m_samples, int cell_samples, int transverse_samples, uint64_t seed);

}  // namespace specflow
