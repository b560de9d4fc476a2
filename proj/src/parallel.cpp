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

#include "distilrank/parallel.hpp"

#include <atomic>
#include <condition_variable>
#include <mutex>
#include <thread>
#include <vector>

namespace distilrank {
namespace {

std::atomic<int> g_threads{1};
thread_local bool tl_in_pool = false;

// Lazily started pool; workers park on a condition variable between jobs.
class Pool {
 public:
  static Pool& instance() {
    static Pool p;
    return p;
  }

  void run(int workers, int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    std::lock_guard<std::mutex> serialize(run_m_);  // one job at a time
    ensure(workers - 1);
    std::int64_t chunk = (n + workers - 1) / workers;
    {
      std::lock_guard<std::mutex> lk(m_);
      job_ = &fn;
      job_n_ = n;
      job_chunk_ = chunk;
      job_workers_ = workers;
      next_part_.store(1, std::memory_order_relaxed);
      pending_ = static_cast<int>(threads_.size());  // every pool thread responds once
      ++epoch_;
    }
    cv_.notify_all();
    // Part 0 runs on the caller.
    fn(0, std::min<int64_t>(chunk, n));
    std::unique_lock<std::mutex> lk(m_);
    done_cv_.wait(lk, [&] { return pending_ == 0; });
    job_ = nullptr;
  }

 private:
  Pool() = default;
  ~Pool() {
    {
      std::lock_guard<std::mutex> lk(m_);
      stop_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  void ensure(int n) {
    std::lock_guard<std::mutex> lk(m_);
    while (static_cast<int>(threads_.size()) < n) {
      threads_.emplace_back([this] { worker(); });
    }
  }

  void worker() {
    tl_in_pool = true;
    uint64_t seen = 0;
    for (;;) {
      const std::function<void(int64_t, int64_t)>* job = nullptr;
      int64_t n = 0, chunk = 0;
      int workers = 0;
      {
        std::unique_lock<std::mutex> lk(m_);
        cv_.wait(lk, [&] { return stop_ || epoch_ != seen; });
        if (stop_) return;
        seen = epoch_;
        job = job_;
        n = job_n_;
        chunk = job_chunk_;
        workers = job_workers_;
      }
      if (!job) continue;
      for (;;) {
        int part = next_part_.fetch_add(1, std::memory_order_relaxed);
        if (part >= workers) break;
        int64_t lo = part * chunk;
        int64_t hi = std::min<int64_t>(lo + chunk, n);
        if (lo < hi) (*job)(lo, hi);
      }
      {
        std::lock_guard<std::mutex> lk(m_);
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::mutex m_, run_m_;
  std::condition_variable cv_, done_cv_;
  std::vector<std::thread> threads_;
  const std::function<void(int64_t, int64_t)>* job_ = nullptr;
  int64_t job_n_ = 0, job_chunk_ = 0;
  int job_workers_ = 0;
  std::atomic<int> next_part_{0};
  int pending_ = 0;
  uint64_t epoch_ = 0;
  bool stop_ = false;
};

}  // namespace

void set_threads(int n) { g_threads.store(n < 1 ? 1 : n); }

int threads() { return g_threads.load(); }

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
  if (n <= 0) return;
  int workers = g_threads.load();
  if (workers > n) workers = static_cast<int>(n);
  if (workers <= 1 || tl_in_pool) {
    fn(0, n);
    return;
  }
  // Flag the caller too: nested parallel_for calls (e.g. a gemm inside a
  // parallel attention loop) must run inline or they would re-enter the pool.
  struct Guard {
    Guard() { tl_in_pool = true; }
    ~Guard() { tl_in_pool = false; }
  } guard;
  Pool::instance().run(workers, n, fn);
}

}  // namespace distilrank
