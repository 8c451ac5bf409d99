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

#include "fastalloc/alloc/mmap_pool.h"

#include <algorithm>

#include "fastalloc/alloc/size_class.h"
#include "timed.h"

namespace fastalloc::alloc {

using backend::ChunkHandle;
using backend::ContractViolation;

MmapPool::MmapPool(std::size_t min_mmap_size, std::size_t table_size)
    : min_mmap_size_(min_mmap_size), table_size_(table_size), buckets_(table_size + 1) {}

std::size_t MmapPool::index_of(std::size_t length) const {
  return bucket_index(length, min_mmap_size_, table_size_);
}

void MmapPool::insert_locked(const ChunkHandle& chunk) {
  buckets_[index_of(chunk.length)].push_back(chunk);
  total_.fetch_add(chunk.length, std::memory_order_acq_rel);
}

ChunkHandle MmapPool::remove_locked(std::size_t bucket, std::size_t pos) {
  auto& list = buckets_[bucket];
  ChunkHandle c = list[pos];
  list[pos] = list.back();
  list.pop_back();
  total_.fetch_sub(c.length, std::memory_order_acq_rel);
  return c;
}

std::optional<ChunkHandle> MmapPool::try_take(std::size_t need, bool* contended) {
  std::unique_lock lock(mu_, std::try_to_lock);
  if (contended) *contended = !lock.owns_lock();
  if (!lock.owns_lock() || total_.load(std::memory_order_relaxed) == 0) return std::nullopt;

  const std::size_t best = best_fit_index(need, min_mmap_size_, table_size_);
  auto& bucket = buckets_[best];
  if (best < table_size_) {
    if (!bucket.empty()) return remove_locked(best, bucket.size() - 1);
  } else {
    for (std::size_t i = 0; i < bucket.size(); ++i) {
      if (bucket[i].length >= need) return remove_locked(best, i);
    }
  }
  for (std::size_t b = table_size_; b >= 1; --b) {
    if (buckets_[b].empty()) continue;
    std::size_t pos = 0;
    for (std::size_t i = 1; i < buckets_[b].size(); ++i) {
      if (buckets_[b][i].length > buckets_[b][pos].length) pos = i;
    }
    return remove_locked(b, pos);
  }
  return std::nullopt;
}

void MmapPool::insert(const ChunkHandle& chunk) {
  std::lock_guard lock(mu_);
  insert_locked(chunk);
}

bool MmapPool::insert_within(const ChunkHandle& chunk, std::size_t limit) {
  std::lock_guard lock(mu_);
  if (total_.load(std::memory_order_relaxed) + chunk.length > limit) return false;
  insert_locked(chunk);
  return true;
}

std::optional<ChunkHandle> MmapPool::take_smallest() {
  std::lock_guard lock(mu_);
  for (std::size_t b = 1; b <= table_size_; ++b) {
    if (buckets_[b].empty()) continue;
    std::size_t pos = 0;
    for (std::size_t i = 1; i < buckets_[b].size(); ++i) {
      if (buckets_[b][i].length < buckets_[b][pos].length) pos = i;
    }
    return remove_locked(b, pos);
  }
  return std::nullopt;
}

std::optional<ChunkHandle> MmapPool::take_unpinned() {
  std::lock_guard lock(mu_);
  for (std::size_t b = 1; b <= table_size_; ++b) {
    for (std::size_t i = 0; i < buckets_[b].size(); ++i) {
      if (!buckets_[b][i].pinned) return remove_locked(b, i);
    }
  }
  return std::nullopt;
}

std::vector<ChunkHandle> MmapPool::drain() {
  std::lock_guard lock(mu_);
  std::vector<ChunkHandle> out;
  for (auto& list : buckets_) {
    out.insert(out.end(), list.begin(), list.end());
    list.clear();
  }
  total_.store(0, std::memory_order_release);
  return out;
}

std::size_t MmapPool::chunk_count() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& list : buckets_) n += list.size();
  return n;
}

std::size_t MmapPool::pinned_bytes() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& list : buckets_) {
    for (const auto& c : list) n += c.pinned ? c.length : 0;
  }
  return n;
}

std::vector<std::size_t> MmapPool::bucket_counts() const {
  std::lock_guard lock(mu_);
  std::vector<std::size_t> out(buckets_.size());
  for (std::size_t b = 0; b < buckets_.size(); ++b) out[b] = buckets_[b].size();
  return out;
}

std::vector<std::size_t> MmapPool::bucket_bytes() const {
  std::lock_guard lock(mu_);
  std::vector<std::size_t> out(buckets_.size());
  for (std::size_t b = 0; b < buckets_.size(); ++b) {
    for (const auto& c : buckets_[b]) out[b] += c.length;
  }
  return out;
}

bool MmapPool::check_invariants() const {
  std::lock_guard lock(mu_);
  std::size_t total = 0;
  if (!buckets_[0].empty()) return false;
  for (std::size_t b = 1; b <= table_size_; ++b) {
    for (const auto& c : buckets_[b]) {
      if (c.length < b * min_mmap_size_) return false;
      if (b < table_size_ && c.length >= (b + 1) * min_mmap_size_) return false;
      total += c.length;
    }
  }
  return total == total_.load(std::memory_order_relaxed);
}

void LargeChunkTable::add(const ChunkHandle& chunk, std::size_t requested) {
  std::lock_guard lock(mu_);
  live_[chunk.base] = Entry{chunk, requested, chunk.length > requested, false, false};
}

bool LargeChunkTable::contains(std::uintptr_t base) const {
  std::lock_guard lock(mu_);
  auto it = live_.find(base);
  return it != live_.end() && !it->second.free_deferred;
}

std::size_t LargeChunkTable::usable_size(std::uintptr_t base) const {
  std::lock_guard lock(mu_);
  auto it = live_.find(base);
  return it == live_.end() || it->second.free_deferred ? 0 : it->second.requested;
}

std::optional<ChunkHandle> LargeChunkTable::release(std::uintptr_t base) {
  std::lock_guard lock(mu_);
  auto it = live_.find(base);
  if (it == live_.end() || it->second.free_deferred) {
    throw ContractViolation("deallocate: not a live allocation (double free?)");
  }
  if (it->second.shrinking) {
    it->second.free_deferred = true;
    return std::nullopt;
  }
  ChunkHandle c = it->second.chunk;
  live_.erase(it);
  return c;
}

std::vector<LargeChunkTable::Shrink> LargeChunkTable::begin_shrinks() {
  std::lock_guard lock(mu_);
  std::vector<Shrink> out;
  for (auto& [base, e] : live_) {
    if (!e.pending_shrink) continue;
    e.pending_shrink = false;
    e.shrinking = true;
    out.push_back({e.chunk, e.requested});
  }
  return out;
}

std::optional<ChunkHandle> LargeChunkTable::finish_shrink(std::uintptr_t base, const ChunkHandle& resized) {
  std::lock_guard lock(mu_);
  auto it = live_.find(base);
  if (it == live_.end()) return std::nullopt;
  it->second.chunk = resized;
  it->second.shrinking = false;
  if (!it->second.free_deferred) return std::nullopt;
  live_.erase(it);
  return resized;
}

std::size_t LargeChunkTable::size() const {
  std::lock_guard lock(mu_);
  return live_.size();
}

std::size_t LargeChunkTable::pending_shrinks() const {
  std::lock_guard lock(mu_);
  std::size_t n = 0;
  for (const auto& [base, e] : live_) n += e.pending_shrink;
  return n;
}

std::vector<ChunkHandle> LargeChunkTable::take_all() {
  std::lock_guard lock(mu_);
  std::vector<ChunkHandle> out;
  for (const auto& [base, e] : live_) out.push_back(e.chunk);
  live_.clear();
  return out;
}

void recycle_or_unmap(MmapPool& pool, backend::Backend& backend, const ChunkHandle& chunk, bool recycle,
                      std::size_t trim_thr) {
  if (recycle && pool.insert_within(chunk, trim_thr)) return;
  backend.unmap_chunk(chunk);
}

void mmap_round(MmapPool& pool, LargeChunkTable& table, backend::Backend& backend, const Thresholds& t,
                bool recycle, RoundReport& report) {
  report.mmap_thresholds = t;

  for (const auto& s : table.begin_shrinks()) {
    ChunkHandle resized = s.chunk;
    std::optional<ChunkHandle> r;
    auto elapsed = timed(backend, [&] { r = backend.resize_chunk(s.chunk, s.target); });
    report.actions.push_back({Component::kMmap, "resize", s.target, elapsed});
    if (r) {
      resized = *r;
      report.pool_shrunk += s.chunk.length - s.target;
    }
    if (auto freed = table.finish_shrink(s.chunk.base, resized)) {
      recycle_or_unmap(pool, backend, *freed, recycle, t.trim_thr);
    }
  }

  // Chunks recycled since the last round are resident but not pinned.
  const std::size_t recycled = pool.chunk_count();
  for (std::size_t i = 0; i < recycled; ++i) {
    auto c = pool.take_unpinned();
    if (!c) break;
    backend::PrefaultResult res;
    try {
      auto elapsed = timed(backend, [&] { res = backend.prefault(c->range()); });
      report.actions.push_back({Component::kMmap, "prefault", c->length, elapsed});
      c->pinned = res.mode == backend::PrefaultMode::kPinned;
    } catch (const backend::OutOfMemory&) {
      pool.insert(*c);
      report.pool_partial = true;
      break;
    }
    pool.insert(*c);
    if (!c->pinned) break;
  }

  report.pool_total_before = pool.total_size();
  if (report.pool_total_before < t.rsv_thr) {
    report.pool_reservation_ran = true;
    while (report.pool_reserved < t.tgt_mem) {
      std::optional<ChunkHandle> c;
      auto map_elapsed = timed(backend, [&] { c = backend.map_chunk(t.mem_chunk); });
      report.actions.push_back({Component::kMmap, "map", c ? t.mem_chunk : 0, map_elapsed});
      if (!c) {
        report.pool_partial = true;
        break;
      }
      try {
        backend::PrefaultResult res;
        auto elapsed = timed(backend, [&] { res = backend.prefault(c->range()); });
        report.actions.push_back({Component::kMmap, "prefault", c->length, elapsed});
        c->pinned = res.mode == backend::PrefaultMode::kPinned;
      } catch (const backend::OutOfMemory&) {
        backend.unmap_chunk(*c);
        report.pool_partial = true;
        break;
      }
      pool.insert(*c);
      report.pool_reserved += t.mem_chunk;
    }
  }

  while (pool.total_size() > t.trim_thr) {
    auto c = pool.take_smallest();
    if (!c) break;
    auto elapsed = timed(backend, [&] { backend.unmap_chunk(*c); });
    report.actions.push_back({Component::kMmap, "unmap", c->length, elapsed});
    report.pool_released += c->length;
  }
  report.pool_total_after = pool.total_size();
}

}  // namespace fastalloc::alloc
