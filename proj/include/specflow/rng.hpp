#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace specflow {

// Philox4x32-10 counter-based generator. A stream is identified by
// (seed, index); draws within a stream advance an internal counter, so
// sample i sees the same numbers regardless of thread schedule.
class Philox {
 public:
  Philox(uint64_t seed, uint64_t index)
      : key_{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32)},
        stream_(index) {}

  uint64_t next_u64() {
    if (pos_ >= 2) refill();
    uint64_t r = (static_cast<uint64_t>(block_[2 * pos_ + 1]) << 32) | block_[2 * pos_];
    ++pos_;
    return r;
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return std::ldexp(static_cast<double>(next_u64() >> 11), -53); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1p-60;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  static constexpr uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  static constexpr uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;

  void refill() {
    std::array<uint32_t, 4> ctr{static_cast<uint32_t>(counter_), static_cast<uint32_t>(counter_ >> 32),
                                static_cast<uint32_t>(stream_), static_cast<uint32_t>(stream_ >> 32)};
    std::array<uint32_t, 2> key = key_;
    for (int round = 0; round < 10; ++round) {
      uint64_t p0 = static_cast<uint64_t>(kM0) * ctr[0];
      uint64_t p1 = static_cast<uint64_t>(kM1) * ctr[2];
      ctr = {static_cast<uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<uint32_t>(p1),
             static_cast<uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<uint32_t>(p0)};
      key[0] += kW0;
      key[1] += kW1;
    }
    block_ = ctr;
    ++counter_;
    pos_ = 0;
  }

  std::array<uint32_t, 2> key_;
  uint64_t stream_;
  uint64_t counter_ = 0;
  std::array<uint32_t, 4> block_{};
  int pos_ = 2;
};

}  // namespace specflow
