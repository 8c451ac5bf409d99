// Copyright 2026 The fastalloc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fastalloc/alloc/metrics.h"

namespace fastalloc::alloc {

AllocationMetrics::AllocationMetrics(std::size_t mmap_threshold, std::size_t initial_small_mean,
                                     std::size_t initial_large_mean)
    : mmap_threshold_(mmap_threshold) {
  last_.small.mean = initial_small_mean;
  last_.large.mean = initial_large_mean;
}

namespace {

ClassMetrics close(std::size_t bytes, std::size_t count, std::size_t prior_mean) {
  return ClassMetrics{bytes, count, count == 0 ? prior_mean : bytes / count};
}

}  // namespace

MetricsSnapshot AllocationMetrics::rollover() {
  std::lock_guard lock(mu_);
  // Each pair is exchanged separately; a request racing the rollover may land
  // its bytes and its count in adjacent intervals.
  std::size_t sb = small_bytes_.exchange(0, std::memory_order_relaxed);
  std::size_t sc = small_count_.exchange(0, std::memory_order_relaxed);
  std::size_t lb = large_bytes_.exchange(0, std::memory_order_relaxed);
  std::size_t lc = large_count_.exchange(0, std::memory_order_relaxed);
  last_.small = close(sb, sc, last_.small.mean);
  last_.large = close(lb, lc, last_.large.mean);
  return last_;
}

MetricsSnapshot AllocationMetrics::current() const {
  std::lock_guard lock(mu_);
  MetricsSnapshot s;
  s.small = close(small_bytes_.load(std::memory_order_relaxed), small_count_.load(std::memory_order_relaxed),
                  last_.small.mean);
  s.large = close(large_bytes_.load(std::memory_order_relaxed), large_count_.load(std::memory_order_relaxed),
                  last_.large.mean);
  return s;
}

MetricsSnapshot AllocationMetrics::last() const {
  std::lock_guard lock(mu_);
  return last_;
}

}  // namespace fastalloc::alloc
