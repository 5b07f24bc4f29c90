#pragma once

#include <bit>
#include <cstdint>

namespace prlstm {

// Branch-free f32 exp/sigmoid/tanh whose loops auto-vectorize (the hot
// translation units add -ffinite-math-only -fno-trapping-math; neither flag
// permits reassociation, so evaluation order and results stay fixed).
// Relative error is ~2e-6, inside every tolerance used by the gradient and
// equivalence checks. Shapes are monotone and saturate cleanly.

inline float fast_exp(float x) {
  // e^x = 2^(x log2 e); round-to-nearest via the 1.5*2^23 shift trick
  const float z = x * 1.44269504088896341f;
  const float shifted = z + 12582912.0f;
  int32_t e = std::bit_cast<int32_t>(shifted) - std::bit_cast<int32_t>(12582912.0f);
  e = e > 126 ? 126 : e;
  e = e < -126 ? -126 : e;
  float f = z - static_cast<float>(e);
  f = f > 0.5f ? 0.5f : f;  // only reachable when the exponent clamp engaged
  f = f < -0.5f ? -0.5f : f;
  // 2^f = e^(f ln2) on [-0.5, 0.5], degree-6 Taylor in f ln2
  float p = 1.5403530e-4f;
  p = p * f + 1.3333558e-3f;
  p = p * f + 9.6181291e-3f;
  p = p * f + 5.5504109e-2f;
  p = p * f + 2.4022651e-1f;
  p = p * f + 6.9314718e-1f;
  p = p * f + 1.0f;
  // scale by 2^e through the exponent bits
  return std::bit_cast<float>(std::bit_cast<int32_t>(p) + (e << 23));
}

inline float fast_sigmoid(float x) { return 1.0f / (1.0f + fast_exp(-x)); }

inline float fast_tanh(float x) {
  const float e = fast_exp(-2.0f * x);
  return (1.0f - e) / (1.0f + e);
}

}  // namespace prlstm
