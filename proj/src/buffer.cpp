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

#include "distilrank/buffer.hpp"

#include <bit>
#include <map>
#include <mutex>

namespace distilrank {

namespace {

constexpr size_t kPoolableMin = 1 << 12;   // below this, malloc is cheap enough
constexpr size_t kPoolBudget = 3u << 29;   // ~1.5 GB of retained capacity

struct Pool {
  std::mutex m;
  std::multimap<size_t, Buffer> free_by_capacity;
  size_t retained = 0;
};

Pool& pool() {
  static Pool* p = new Pool;  // leaked deliberately: outlives static teardown
  return *p;
}

}  // namespace

Buffer acquire_buffer(size_t n) {
  if (n >= kPoolableMin) {
    Pool& p = pool();
    std::lock_guard<std::mutex> lock(p.m);
    auto it = p.free_by_capacity.lower_bound(n);
    // Accept a recycled block unless it wastes more than 2x.
    if (it != p.free_by_capacity.end() && it->first <= 2 * n) {
      Buffer b = std::move(it->second);
      p.retained -= it->first;
      p.free_by_capacity.erase(it);
      b.resize(n);  // no-op construction; contents indeterminate
      return b;
    }
  }
  Buffer b;
  b.resize(n);
  return b;
}

void release_buffer(Buffer&& b) {
  const size_t cap = b.capacity();
  if (cap < kPoolableMin) return;
  Pool& p = pool();
  std::lock_guard<std::mutex> lock(p.m);
  if (p.retained + cap > kPoolBudget) return;  // drop on the floor
  p.retained += cap;
  p.free_by_capacity.emplace(cap, std::move(b));
}

}  // namespace distilrank
