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
//
// Per-interval request counters, split at the mmap threshold.

#pragma once

#include <atomic>
#include <cstddef>
#include <mutex>

namespace fastalloc::alloc {

struct ClassMetrics {
  std::size_t bytes = 0;
  std::size_t count = 0;
  // bytes / count, or the previous interval's mean when count == 0.
  std::size_t mean = 0;
};

struct MetricsSnapshot {
  ClassMetrics small;
  ClassMetrics large;
};

class AllocationMetrics {
 public:
  AllocationMetrics(std::size_t mmap_threshold, std::size_t initial_small_mean,
                    std::size_t initial_large_mean);

  void record_request(std::size_t size) {
    if (size < mmap_threshold_) {
      small_bytes_.fetch_add(size, std::memory_order_relaxed);
      small_count_.fetch_add(1, std::memory_order_relaxed);
    } else {
      large_bytes_.fetch_add(size, std::memory_order_relaxed);
      large_count_.fetch_add(1, std::memory_order_relaxed);
    }
  }

  // Closes the current interval: returns its counters and zeroes them.
  MetricsSnapshot rollover();

  // Counters of the interval in progress (means carried from the last one).
  MetricsSnapshot current() const;
  // Result of the most recent rollover.
  MetricsSnapshot last() const;

 private:
  const std::size_t mmap_threshold_;
  std::atomic<std::size_t> small_bytes_{0};
  std::atomic<std::size_t> small_count_{0};
  std::atomic<std::size_t> large_bytes_{0};
  std::atomic<std::size_t> large_count_{0};
  mutable std::mutex mu_;
  MetricsSnapshot last_;
};

}  // namespace fastalloc::alloc
