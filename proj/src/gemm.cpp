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

#include "distilrank/gemm.hpp"

#include <algorithm>
#include <vector>

#include "distilrank/parallel.hpp"

namespace distilrank {
namespace {

// Register-blocked panel kernels. MR rows of A are multiplied against an
// NB-wide panel of B with the accumulators held in registers across the
// whole k loop; tails fall back to a single-row variant.

template <class T, int MR, int NB, bool Acc>
void gemm_rows(const T* __restrict a, const T* __restrict b, T* __restrict c, int64_t i0,
               int64_t i1, int64_t k, int64_t n) {
  for (int64_t j0 = 0; j0 < n; j0 += NB) {
    const int nb = static_cast<int>(std::min<int64_t>(NB, n - j0));
    int64_t i = i0;
    if (nb == NB) {
      for (; i + MR <= i1; i += MR) {
        T acc[MR][NB];
        for (int r = 0; r < MR; ++r)
          for (int x = 0; x < NB; ++x) acc[r][x] = Acc ? c[(i + r) * n + j0 + x] : T(0);
        for (int64_t kk = 0; kk < k; ++kk) {
          const T* __restrict bk = b + kk * n + j0;
          T av[MR];
          for (int r = 0; r < MR; ++r) av[r] = a[(i + r) * k + kk];
          for (int r = 0; r < MR; ++r)
            for (int x = 0; x < NB; ++x) acc[r][x] += av[r] * bk[x];
        }
        for (int r = 0; r < MR; ++r)
          for (int x = 0; x < NB; ++x) c[(i + r) * n + j0 + x] = acc[r][x];
      }
    }
    for (; i < i1; ++i) {
      T acc[NB];
      for (int x = 0; x < nb; ++x) acc[x] = Acc ? c[i * n + j0 + x] : T(0);
      for (int64_t kk = 0; kk < k; ++kk) {
        const T* __restrict bk = b + kk * n + j0;
        const T av = a[i * k + kk];
        for (int x = 0; x < nb; ++x) acc[x] += av * bk[x];
      }
      for (int x = 0; x < nb; ++x) c[i * n + j0 + x] = acc[x];
    }
  }
}

template <class T, bool Acc>
void gemm_nt_rows(const T* __restrict a, const T* __restrict b, T* __restrict c, int64_t i0,
                  int64_t i1, int64_t k, int64_t n) {
  constexpr int JB = 4;
  for (int64_t i = i0; i < i1; ++i) {
    const T* __restrict ai = a + i * k;
    int64_t j = 0;
    for (; j + JB <= n; j += JB) {
      T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
      const T* __restrict b0 = b + (j + 0) * k;
      const T* __restrict b1 = b + (j + 1) * k;
      const T* __restrict b2 = b + (j + 2) * k;
      const T* __restrict b3 = b + (j + 3) * k;
      for (int64_t kk = 0; kk < k; ++kk) {
        const T av = ai[kk];
        s0 += av * b0[kk];
        s1 += av * b1[kk];
        s2 += av * b2[kk];
        s3 += av * b3[kk];
      }
      if (Acc) {
        c[i * n + j + 0] += s0;
        c[i * n + j + 1] += s1;
        c[i * n + j + 2] += s2;
        c[i * n + j + 3] += s3;
      } else {
        c[i * n + j + 0] = s0;
        c[i * n + j + 1] = s1;
        c[i * n + j + 2] = s2;
        c[i * n + j + 3] = s3;
      }
    }
    for (; j < n; ++j) {
      T s = 0;
      const T* __restrict bj = b + j * k;
      for (int64_t kk = 0; kk < k; ++kk) s += ai[kk] * bj[kk];
      if (Acc) c[i * n + j] += s;
      else c[i * n + j] = s;
    }
  }
}

// A^T is materialized once so the fast panel kernel does the heavy lifting;
// the rank-1-update formulation thrashes C instead.
thread_local std::vector<double> tl_tn_scratch;
thread_local std::vector<double> tl_nt_scratch;

template <class T>
void transpose_tiled(const T* src, T* dst, int64_t rows, int64_t cols) {
  // dst[c, r] = src[r, c]
  constexpr int64_t TB = 32;
  for (int64_t r0 = 0; r0 < rows; r0 += TB)
    for (int64_t c0 = 0; c0 < cols; c0 += TB) {
      const int64_t r1 = std::min(r0 + TB, rows), c1 = std::min(c0 + TB, cols);
      for (int64_t r = r0; r < r1; ++r)
        for (int64_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
    }
}

constexpr int64_t kParallelFlopCutoff = 1 << 22;

template <class Fn>
void split_rows(int64_t m, int64_t flops, const Fn& fn) {
  if (flops < kParallelFlopCutoff || threads() <= 1) {
    fn(0, m);
    return;
  }
  parallel_for(m, fn);
}

}  // namespace

void gemm_f64(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
              bool accumulate) {
  split_rows(m, m * k * n, [=](int64_t i0, int64_t i1) {
    if (accumulate) gemm_rows<double, 4, 32, true>(a, b, c, i0, i1, k, n);
    else gemm_rows<double, 4, 32, false>(a, b, c, i0, i1, k, n);
  });
}

void gemm_f32(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n,
              bool accumulate) {
  split_rows(m, m * k * n, [=](int64_t i0, int64_t i1) {
    if (accumulate) gemm_rows<float, 4, 64, true>(a, b, c, i0, i1, k, n);
    else gemm_rows<float, 4, 64, false>(a, b, c, i0, i1, k, n);
  });
}

void gemm_nt_f64(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                 bool accumulate) {
  // The panel kernel on a transposed B beats the dot-product path once the
  // output has enough rows to amortize the copy.
  if (m >= 64 && n * k >= (1 << 11)) {
    auto& bt = tl_nt_scratch;
    if (static_cast<int64_t>(bt.size()) < n * k) bt.resize(static_cast<size_t>(n * k));
    transpose_tiled(b, bt.data(), n, k);
    gemm_f64(a, bt.data(), c, m, k, n, accumulate);
    return;
  }
  split_rows(m, m * k * n, [=](int64_t i0, int64_t i1) {
    if (accumulate) gemm_nt_rows<double, true>(a, b, c, i0, i1, k, n);
    else gemm_nt_rows<double, false>(a, b, c, i0, i1, k, n);
  });
}

thread_local std::vector<float> tl_nt_scratch_f32;

void gemm_nt_f32(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n,
                 bool accumulate) {
  if (m >= 64 && n * k >= (1 << 11)) {
    auto& bt = tl_nt_scratch_f32;
    if (static_cast<int64_t>(bt.size()) < n * k) bt.resize(static_cast<size_t>(n * k));
    transpose_tiled(b, bt.data(), n, k);
    gemm_f32(a, bt.data(), c, m, k, n, accumulate);
    return;
  }
  split_rows(m, m * k * n, [=](int64_t i0, int64_t i1) {
    if (accumulate) gemm_nt_rows<float, true>(a, b, c, i0, i1, k, n);
    else gemm_nt_rows<float, false>(a, b, c, i0, i1, k, n);
  });
}

void gemm_tn_f64(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                 bool accumulate) {
  auto& at = tl_tn_scratch;
  if (static_cast<int64_t>(at.size()) < m * k) at.resize(static_cast<size_t>(m * k));
  transpose_tiled(a, at.data(), k, m);
  gemm_f64(at.data(), b, c, m, k, n, accumulate);
}

}  // namespace distilrank
