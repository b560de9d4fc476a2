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

#ifndef DISTILRANK_PARALLEL_HPP
#define DISTILRANK_PARALLEL_HPP

#include <functional>

namespace distilrank {

// Global worker count used by the kernels (1 = run everything on the
// calling thread). Results are bitwise identical for any setting: work is
// partitioned by output rows, never by reduction order.
void set_threads(int n);
int threads();

// Invokes fn(first, last) over a partition of [0, n) across the workers.
// Blocks until all chunks complete. Nested calls run sequentially.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace distilrank

#endif  // DISTILRANK_PARALLEL_HPP
