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

#ifndef DISTILRANK_GEMM_HPP
#define DISTILRANK_GEMM_HPP

#include <cstdint>

namespace distilrank {

// C = (accumulate ? C : 0) + A[M,K] * B[K,N], all row-major. Deterministic:
// each output element is accumulated in ascending-k order regardless of the
// worker count (parallelism splits output rows only). Overwrite mode lets
// callers skip zero-filling the destination.
void gemm_f64(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
              bool accumulate = true);
void gemm_f32(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n,
              bool accumulate = true);

// Same with B^T, where B is [N,K] row-major (dot products of rows).
void gemm_nt_f64(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                 bool accumulate = true);
void gemm_nt_f32(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n,
                 bool accumulate = true);

// Same with A^T, where A is [K,M] row-major.
void gemm_tn_f64(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
                 bool accumulate = true);

}  // namespace distilrank

#endif  // DISTILRANK_GEMM_HPP
