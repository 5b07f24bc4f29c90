#pragma once

#include <cstdint>
#include <random>

namespace prlstm {

// Deterministic RNG with identical output on every platform. std::mt19937_64
// is fully specified by the standard; the draw helpers below avoid
// std::uniform_*_distribution, whose mapping is implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Unbiased draw in [0, bound) via rejection.
  uint64_t next_below(uint64_t bound) {
    uint64_t threshold = -bound % bound;  // 2^64 mod bound
    for (;;) {
      uint64_t r = eng_();
      if (r >= threshold) return r % bound;
    }
  }

  // Inclusive range.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(next_below(static_cast<uint64_t>(hi - lo + 1)));
  }

  bool coin() { return (eng_() >> 63) != 0; }

  // 24-bit grid in [0,1), enough for float init.
  float uniform_float(float lo, float hi) {
    float u = static_cast<float>(eng_() >> 40) * 0x1.0p-24f;
    return lo + u * (hi - lo);
  }

  double uniform_double(double lo, double hi) {
    double u = static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
  }

 private:
  std::mt19937_64 eng_;
};

// splitmix64 finisher; used to derive independent streams (per sample, per
// step) from a base seed without correlated low bits.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace prlstm
