/*
 * Copyright 2026 The distilrank Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DISTILRANK_FASTMATH_HPP
#define DISTILRANK_FASTMATH_HPP

#include <bit>
#include <cstdint>

namespace distilrank {

// Branch-light exp with ~1e-13 relative error, written so the compiler can
// vectorize loops over it (libm exp/erf calls defeat vectorization and
// dominate training-step time otherwise).
inline double fast_exp(double x) {
  if (x < -708.0) return 0.0;
  if (x > 708.0) x = 708.0;
  constexpr double log2e = 1.4426950408889634074;
  constexpr double ln2_hi = 6.93147180369123816490e-01;
  constexpr double ln2_lo = 1.90821492927058770002e-10;
  const double nf = static_cast<double>(static_cast<int64_t>(x * log2e + (x >= 0 ? 0.5 : -0.5)));
  const double r = (x - nf * ln2_hi) - nf * ln2_lo;
  // Degree-10 Taylor on |r| <= ln2/2.
  double p = 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  const int64_t bits = (static_cast<int64_t>(nf) + 1023) << 52;
  return p * std::bit_cast<double>(bits);
}

inline float fast_exp(float x) {
  if (x < -87.0f) return 0.0f;
  if (x > 88.0f) x = 88.0f;
  constexpr float log2e = 1.442695041f;
  constexpr float ln2 = 0.6931471805599453f;
  const float nf = static_cast<float>(static_cast<int32_t>(x * log2e + (x >= 0 ? 0.5f : -0.5f)));
  const float r = x - nf * ln2;
  float p = 1.0f / 720.0f;
  p = p * r + 1.0f / 120.0f;
  p = p * r + 1.0f / 24.0f;
  p = p * r + 1.0f / 6.0f;
  p = p * r + 0.5f;
  p = p * r + 1.0f;
  p = p * r + 1.0f;
  const int32_t bits = (static_cast<int32_t>(nf) + 127) << 23;
  return p * std::bit_cast<float>(bits);
}

template <class T>
inline T fast_tanh(T x) {
  // tanh via one exp; symmetric clamp keeps the bit pattern stable.
  if (x > T(20)) return T(1);
  if (x < T(-20)) return T(-1);
  const T e = fast_exp(T(2) * x);
  return (e - T(1)) / (e + T(1));
}

// GELU, tanh formulation: 0.5 x (1 + tanh(c0 (x + c1 x^3))).
template <class T>
inline T gelu_value(T x) {
  constexpr T c0 = T(0.7978845608028654);
  constexpr T c1 = T(0.044715);
  return T(0.5) * x * (T(1) + fast_tanh(c0 * (x + c1 * x * x * x)));
}

template <class T>
inline T gelu_derivative(T x) {
  constexpr T c0 = T(0.7978845608028654);
  constexpr T c1 = T(0.044715);
  const T t = fast_tanh(c0 * (x + c1 * x * x * x));
  const T du = c0 * (T(1) + T(3) * c1 * x * x);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * du;
}

template <class T>
inline T fast_sigmoid(T x) {
  return T(1) / (T(1) + fast_exp(-x));
}

}  // namespace distilrank

#endif  // DISTILRANK_FASTMATH_HPP
