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
// Allocator front-end. Requests below the mmap threshold are served by the
// heap arena, larger ones by the chunk pool. While the process is registered
// as latency-critical a management round runs every policy interval, either
// on an internal thread or when the owner calls run_management_round().
// Unregistered instances pass every request to the default paths.

#pragma once

#include <sys/types.h>
#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <thread>
#include <vector>

#include "fastalloc/alloc/heap_arena.h"
#include "fastalloc/alloc/metrics.h"
#include "fastalloc/alloc/mmap_pool.h"
#include "fastalloc/alloc/policy.h"
#include "fastalloc/alloc/registry_probe.h"
#include "fastalloc/alloc/round_report.h"
#include "fastalloc/backend/backend.h"

namespace fastalloc::alloc {

enum class DriveMode {
  kThread,  // internal management thread, period = policy.interval
  kManual,  // rounds run only when run_management_round() is called
};

struct Diagnostics {
  bool managed = false;
  std::uint64_t rounds = 0;
  MetricsSnapshot last_interval;
  MetricsSnapshot current_interval;
  Thresholds heap_thresholds;
  Thresholds mmap_thresholds;
  std::size_t top_free = 0;
  std::size_t heap_committed = 0;
  std::size_t heap_live_blocks = 0;
  std::vector<std::size_t> bucket_counts;
  std::vector<std::size_t> bucket_bytes;
  std::size_t pool_total = 0;
  std::size_t large_live = 0;
  std::size_t pending_shrinks = 0;
  std::uint64_t fast_small = 0;
  std::uint64_t fallback_small = 0;
  std::uint64_t fast_large = 0;
  std::uint64_t fallback_large = 0;
  std::size_t pinned_bytes = 0;
  std::uint64_t max_wait_ops = 0;
};

class Allocator {
 public:
  static constexpr std::size_t kAlignment = HeapArena::kAlignment;

  // `probe` may be null (never registered) and must outlive the allocator.
  Allocator(ReservationPolicy policy, backend::Backend& backend, const RegistryProbe* probe,
            DriveMode mode = DriveMode::kThread, pid_t pid = ::getpid());
  ~Allocator();
  Allocator(const Allocator&) = delete;
  Allocator& operator=(const Allocator&) = delete;

  // nullptr on exhaustion. Throws ContractViolation for size 0.
  void* allocate(std::size_t size);
  // nullptr is ignored. Throws ContractViolation for addresses not returned
  // by allocate() or already freed.
  void deallocate(void* p);
  std::size_t usable_size(const void* p) const;

  // Probes the registry, then (when registered) rolls the metrics interval
  // over, recomputes thresholds and runs the heap and mmap rounds. Tears the
  // reserves down when the process is no longer registered.
  RoundReport run_management_round();

  bool managed() const { return managed_.load(std::memory_order_acquire); }
  bool thread_running() const;
  Diagnostics diagnostics() const;

  const ReservationPolicy& policy() const { return policy_; }
  backend::Backend& backend() { return backend_; }
  HeapArena& arena() { return arena_; }
  const MmapPool& pool() const { return pool_; }
  const LargeChunkTable& large_table() const { return table_; }

  // Keeps every round report (for CSV export and tests).
  void set_keep_reports(bool keep);
  std::vector<RoundReport> reports() const;

 private:
  void* allocate_large(std::size_t size);
  void maybe_probe();
  void start_thread();
  void thread_main(std::stop_token stop);
  void enable_locked();
  void teardown_locked(RoundReport& report);

  const ReservationPolicy policy_;
  backend::Backend& backend_;
  const RegistryProbe* probe_;
  const DriveMode mode_;
  const pid_t pid_;
  const std::size_t page_;

  HeapArena arena_;
  MmapPool pool_;
  LargeChunkTable table_;
  AllocationMetrics metrics_;

  std::atomic<bool> managed_{false};
  std::atomic<std::size_t> large_trim_thr_{0};
  std::atomic<std::int64_t> last_probe_ns_{0};

  std::atomic<std::uint64_t> fast_small_{0};
  std::atomic<std::uint64_t> fallback_small_{0};
  std::atomic<std::uint64_t> fast_large_{0};
  std::atomic<std::uint64_t> fallback_large_{0};

  mutable std::mutex round_mu_;
  std::uint64_t rounds_ = 0;
  Thresholds heap_thresholds_;
  Thresholds mmap_thresholds_;
  bool keep_reports_ = false;
  std::vector<RoundReport> reports_;

  mutable std::mutex thread_mu_;
  std::condition_variable_any sleep_cv_;
  std::mutex sleep_mu_;
  std::atomic<bool> thread_alive_{false};
  std::jthread thread_;
};

}  // namespace fastalloc::alloc
