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

#include "fastalloc/alloc/heap_arena.h"

#include <algorithm>
#include <thread>
#include <vector>

#include "fastalloc/common/units.h"
#include "timed.h"

namespace fastalloc::alloc {

using backend::ContractViolation;

HeapArena::HeapArena(backend::Backend& backend, std::size_t region_limit)
    : backend_(backend), page_(backend.page_size()) {
  region_ = backend_.create_region(region_limit);
  alloc_end_ = region_.base;
}

HeapArena::~HeapArena() {
  try {
    backend_.release_region(region_);
  } catch (...) {
  }
}

void* HeapArena::allocate(std::size_t size, Source* source) {
  if (size == 0) throw ContractViolation("allocate: zero size");
  const std::size_t need = std::max(kAlignment, round_up(size, kAlignment));

  waiters_.fetch_add(1, std::memory_order_acq_rel);
  const std::uint64_t c0 = backend_.op_count();
  std::unique_lock lock(mu_);
  const std::uint64_t c1 = backend_.op_count();
  waiters_.fetch_sub(1, std::memory_order_acq_rel);
  acquisitions_.fetch_add(1, std::memory_order_acq_rel);
  std::uint64_t seen = max_wait_ops_.load(std::memory_order_relaxed);
  while (c1 - c0 > seen && !max_wait_ops_.compare_exchange_weak(seen, c1 - c0)) {
  }
  if (trace_) trace_log_.push_back(c1);

  if (std::uintptr_t b = take_free_locked(need); b != 0) {
    live_.emplace(b, need);
    if (source) *source = Source::kFreeList;
    return reinterpret_cast<void*>(b);
  }
  const std::size_t top = region_.committed_end - alloc_end_;
  Source from = Source::kTop;
  if (top < need) {
    std::size_t grow = round_up(need - top + kTopPad, page_);
    if (grow > region_.headroom()) grow = round_up(need - top, page_);
    if (grow > region_.headroom() || !backend_.grow_region(region_, grow)) return nullptr;
    from = Source::kGrowth;
  }
  std::uintptr_t b = alloc_end_;
  alloc_end_ += need;
  live_.emplace(b, need);
  if (source) *source = from;
  return reinterpret_cast<void*>(b);
}

void HeapArena::deallocate(void* p) {
  const auto a = reinterpret_cast<std::uintptr_t>(p);
  std::lock_guard lock(mu_);
  auto it = live_.find(a);
  if (it == live_.end()) throw ContractViolation("deallocate: not a live heap block (double free?)");
  const std::size_t size = it->second;
  live_.erase(it);
  insert_free_locked(a, size);
  if (!managed_) {
    const std::size_t top = region_.committed_end - alloc_end_;
    if (top > kTrimThreshold) {
      const std::size_t delta = round_down(top - kTopPad, page_);
      if (delta != 0) shrink_locked(delta);
    }
  }
}

std::size_t HeapArena::block_size(const void* p) const {
  std::lock_guard lock(mu_);
  auto it = live_.find(reinterpret_cast<std::uintptr_t>(p));
  return it == live_.end() ? 0 : it->second;
}

void HeapArena::set_managed(bool managed) {
  std::lock_guard lock(mu_);
  managed_ = managed;
}

std::uintptr_t HeapArena::take_free_locked(std::size_t need) {
  for (auto it = free_.begin(); it != free_.end(); ++it) {
    if (it->second < need) continue;
    const std::uintptr_t begin = it->first;
    const std::size_t rest = it->second - need;
    free_.erase(it);
    if (rest != 0) free_.emplace(begin + need, rest);
    free_bytes_ -= need;
    return begin;
  }
  return 0;
}

void HeapArena::insert_free_locked(std::uintptr_t begin, std::size_t size) {
  auto next = free_.lower_bound(begin);
  if (next != free_.end() && next->first == begin + size) {
    size += next->second;
    free_bytes_ -= next->second;
    next = free_.erase(next);
  }
  if (next != free_.begin()) {
    auto prev = std::prev(next);
    if (prev->first + prev->second == begin) {
      begin = prev->first;
      size += prev->second;
      free_bytes_ -= prev->second;
      free_.erase(prev);
    }
  }
  if (begin + size == alloc_end_) {
    alloc_end_ = begin;
    return;
  }
  free_.emplace(begin, size);
  free_bytes_ += size;
}

void HeapArena::shrink_locked(std::size_t delta) {
  const std::uintptr_t old_end = region_.committed_end;
  backend_.shrink_region(region_, delta);
  pinned_.erase(region_.committed_end, old_end);
}

void HeapArena::yield_to_waiters() const {
  const int waiting = waiters_.load(std::memory_order_acquire);
  if (waiting == 0) return;
  const std::uint64_t start = acquisitions_.load(std::memory_order_acquire);
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(20);
  while (acquisitions_.load(std::memory_order_acquire) - start < static_cast<std::uint64_t>(waiting) &&
         std::chrono::steady_clock::now() < deadline) {
    std::this_thread::yield();
  }
}

std::size_t HeapArena::unpin_handed_out(RoundReport& report, bool all) {
  std::size_t total = 0;
  {
    std::lock_guard lock(mu_);
    const std::uintptr_t limit = all ? region_.limit : round_down(alloc_end_, page_);
    for (const auto& [b, e] : pinned_.overlap(region_.base, limit)) {
      auto elapsed = timed(backend_, [&] { backend_.unpin({b, e - b}); });
      pinned_.erase(b, e);
      report.actions.push_back({Component::kHeap, "unpin", e - b, elapsed});
      total += e - b;
    }
  }
  if (total != 0) yield_to_waiters();
  return total;
}

bool HeapArena::prefault_top_gap(std::size_t max_bytes, RoundReport& report) {
  {
    std::lock_guard lock(mu_);
    const std::uintptr_t lo = round_up(alloc_end_, page_);
    const std::uintptr_t hi = region_.committed_end;
    if (lo >= hi) return false;
    std::uintptr_t cursor = lo;
    std::uintptr_t gap_end = hi;
    for (const auto& [b, e] : pinned_.overlap(lo, hi)) {
      if (b > cursor) {
        gap_end = b;
        break;
      }
      cursor = e;
    }
    if (cursor >= hi) return false;
    const std::size_t len = std::min<std::size_t>(gap_end - cursor, round_up(max_bytes, page_));
    backend::PrefaultResult res;
    auto elapsed = timed(backend_, [&] { res = backend_.prefault({cursor, len}); });
    report.actions.push_back({Component::kHeap, "prefault", len, elapsed});
    if (res.mode != backend::PrefaultMode::kPinned) return false;
    pinned_.insert(cursor, cursor + len);
  }
  yield_to_waiters();
  return true;
}

bool HeapArena::reserve_step(std::size_t chunk, RoundReport& report) {
  {
    std::lock_guard lock(mu_);
    if (chunk > region_.headroom()) return false;
    std::optional<backend::AddressRange> grown;
    auto grow_elapsed = timed(backend_, [&] { grown = backend_.grow_region(region_, chunk); });
    report.actions.push_back({Component::kHeap, "grow", grown ? chunk : 0, grow_elapsed});
    if (!grown) return false;
    backend::PrefaultResult res;
    auto elapsed = timed(backend_, [&] { res = backend_.prefault(*grown); });
    report.actions.push_back({Component::kHeap, "prefault", chunk, elapsed});
    if (res.mode == backend::PrefaultMode::kPinned) pinned_.insert(grown->begin, grown->end());
  }
  yield_to_waiters();
  return true;
}

std::size_t HeapArena::trim_top(std::size_t keep, RoundReport& report) {
  std::size_t delta = 0;
  {
    std::lock_guard lock(mu_);
    const std::size_t top = region_.committed_end - alloc_end_;
    if (top <= keep) return 0;
    delta = round_down(top - keep, page_);
    if (delta == 0) return 0;
    auto elapsed = timed(backend_, [&] { shrink_locked(delta); });
    report.actions.push_back({Component::kHeap, "shrink", delta, elapsed});
  }
  yield_to_waiters();
  return delta;
}

std::size_t HeapArena::top_free() const {
  std::lock_guard lock(mu_);
  return region_.committed_end - alloc_end_;
}

std::size_t HeapArena::committed() const {
  std::lock_guard lock(mu_);
  return region_.committed();
}

std::size_t HeapArena::live_blocks() const {
  std::lock_guard lock(mu_);
  return live_.size();
}

std::size_t HeapArena::free_list_bytes() const {
  std::lock_guard lock(mu_);
  return free_bytes_;
}

std::size_t HeapArena::pinned_bytes() const {
  std::lock_guard lock(mu_);
  return pinned_.bytes();
}

bool HeapArena::empty() const {
  std::lock_guard lock(mu_);
  return live_.empty() && free_.empty() && alloc_end_ == region_.base;
}

void HeapArena::set_acquire_trace(bool on) {
  std::lock_guard lock(mu_);
  trace_ = on;
  trace_log_.clear();
}

std::vector<std::uint64_t> HeapArena::acquire_trace() const {
  std::lock_guard lock(mu_);
  return trace_log_;
}

bool HeapArena::check_invariants() const {
  std::lock_guard lock(mu_);
  if (!(region_.base <= alloc_end_ && alloc_end_ <= region_.committed_end)) return false;
  std::vector<std::pair<std::uintptr_t, std::size_t>> blocks(live_.begin(), live_.end());
  std::size_t free_sum = 0;
  for (const auto& [b, s] : free_) {
    blocks.emplace_back(b, s);
    free_sum += s;
  }
  if (free_sum != free_bytes_) return false;
  std::sort(blocks.begin(), blocks.end());
  std::uintptr_t cursor = region_.base;
  for (const auto& [b, s] : blocks) {
    if (b != cursor || s == 0 || b % kAlignment != 0) return false;
    cursor = b + s;
  }
  if (cursor != alloc_end_) return false;
  // Free neighbours are always merged, and no free block borders the top.
  for (auto it = free_.begin(); it != free_.end(); ++it) {
    auto next = std::next(it);
    if (next != free_.end() && it->first + it->second == next->first) return false;
    if (it->first + it->second == alloc_end_) return false;
  }
  return true;
}

void heap_round(HeapArena& arena, const Thresholds& t, RoundReport& report) {
  report.heap_thresholds = t;
  report.heap_top_before = arena.top_free();
  arena.unpin_handed_out(report);
  try {
    while (arena.prefault_top_gap(t.mem_chunk, report)) {
    }
    const std::size_t top = arena.top_free();
    if (top < t.rsv_thr) {
      report.heap_reservation_ran = true;
      const std::size_t to_reserve = t.tgt_mem > top ? t.tgt_mem - top : 0;
      while (report.heap_reserved < to_reserve) {
        if (!arena.reserve_step(t.mem_chunk, report)) {
          report.heap_partial = true;
          break;
        }
        report.heap_reserved += t.mem_chunk;
        ++report.heap_grow_calls;
      }
    } else if (top > t.trim_thr) {
      report.heap_trimmed = arena.trim_top(t.trim_thr, report);
    }
  } catch (const backend::OutOfMemory&) {
    report.heap_partial = true;
  }
  report.heap_top_after = arena.top_free();
}

}  // namespace fastalloc::alloc
