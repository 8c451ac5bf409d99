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
// The main heap: one contiguous region split into an allocated area and a
// top chunk. Small blocks are carved first-fit from an address-ordered free
// list, then from the top chunk, then from default growth. Block metadata is
// kept out of band so the heap never writes into application pages.
//
// Pages reserved by a management round are prefaulted and pinned. Handing
// them out does not unpin them immediately (that would cost a backend call
// on the fast path); the next round unpins every pinned page that has since
// moved below the allocation end.

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <vector>

#include "fastalloc/alloc/round_report.h"
#include "fastalloc/backend/backend.h"
#include "fastalloc/common/interval_set.h"

namespace fastalloc::alloc {

class HeapArena {
 public:
  static constexpr std::size_t kAlignment = 16;
  // Default-growth padding and free-time trim threshold of the unmanaged path.
  static constexpr std::size_t kTopPad = std::size_t{128} << 10;
  static constexpr std::size_t kTrimThreshold = std::size_t{128} << 10;

  HeapArena(backend::Backend& backend, std::size_t region_limit);
  ~HeapArena();
  HeapArena(const HeapArena&) = delete;
  HeapArena& operator=(const HeapArena&) = delete;

  enum class Source { kFreeList, kTop, kGrowth };

  // nullptr when the region cannot grow. `source` reports where the block
  // came from.
  void* allocate(std::size_t size, Source* source = nullptr);
  // Throws ContractViolation for addresses that are not live blocks.
  void deallocate(void* p);
  bool owns(const void* p) const {
    auto a = reinterpret_cast<std::uintptr_t>(p);
    return a >= region_.base && a < region_.limit;
  }
  // Usable size of a live block, 0 when not live.
  std::size_t block_size(const void* p) const;

  // Managed arenas leave trimming to management rounds.
  void set_managed(bool managed);

  // Round primitives. Each holds the arena lock only for its own backend
  // calls and then yields to allocations waiting on the lock.
  // Unpins pinned pages below the allocation end (every pinned page when
  // `all` is set).
  std::size_t unpin_handed_out(RoundReport& report, bool all = false);
  // Prefaults up to `max_bytes` of top-chunk pages that are not pinned.
  // Returns false when the top chunk is fully pinned.
  bool prefault_top_gap(std::size_t max_bytes, RoundReport& report);
  // Grows the region by `chunk` and prefaults the new pages. False when the
  // region cannot grow.
  bool reserve_step(std::size_t chunk, RoundReport& report);
  // Shrinks the region so that top_free is at most keep (page granular).
  std::size_t trim_top(std::size_t keep, RoundReport& report);

  std::size_t top_free() const;
  std::size_t committed() const;
  std::size_t live_blocks() const;
  std::size_t free_list_bytes() const;
  std::size_t pinned_bytes() const;
  bool empty() const;

  // Largest number of backend calls that started while an allocation was
  // waiting for the arena lock.
  std::uint64_t max_wait_ops() const { return max_wait_ops_.load(std::memory_order_relaxed); }
  void reset_max_wait_ops() { max_wait_ops_.store(0, std::memory_order_relaxed); }
  // op_count() value observed when each allocation got the lock; only kept
  // while tracing is on.
  void set_acquire_trace(bool on);
  std::vector<std::uint64_t> acquire_trace() const;

  // Checks the partition of [base, committed_end) into live, free and top.
  bool check_invariants() const;

 private:
  std::uintptr_t take_free_locked(std::size_t need);
  void insert_free_locked(std::uintptr_t begin, std::size_t size);
  void shrink_locked(std::size_t delta);
  void yield_to_waiters() const;

  backend::Backend& backend_;
  const std::size_t page_;
  mutable std::mutex mu_;
  backend::Region region_;
  std::uintptr_t alloc_end_ = 0;
  std::unordered_map<std::uintptr_t, std::size_t> live_;
  std::map<std::uintptr_t, std::size_t> free_;
  std::size_t free_bytes_ = 0;
  IntervalSet pinned_;
  bool managed_ = false;

  std::atomic<int> waiters_{0};
  std::atomic<std::uint64_t> acquisitions_{0};
  std::atomic<std::uint64_t> max_wait_ops_{0};
  bool trace_ = false;
  std::vector<std::uint64_t> trace_log_;
};

// One heap management round: reserve gradually when top_free < rsv_thr,
// trim when top_free > trim_thr.
void heap_round(HeapArena& arena, const Thresholds& thresholds, RoundReport& report);

}  // namespace fastalloc::alloc
