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
// Pool of prefaulted large chunks kept in a segregated free list, and the
// table of large chunks currently handed out.

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <vector>

#include "fastalloc/alloc/round_report.h"
#include "fastalloc/backend/backend.h"

namespace fastalloc::alloc {

class MmapPool {
 public:
  MmapPool(std::size_t min_mmap_size, std::size_t table_size);

  // Allocation path. Never blocks: sets *contended and returns nullopt when a
  // round holds the pool. Otherwise removes, in order of preference, a chunk
  // from the best-fit bucket, a fitting chunk from the saturated top bucket,
  // or the largest free chunk (which may be smaller than `need`).
  std::optional<backend::ChunkHandle> try_take(std::size_t need, bool* contended);

  void insert(const backend::ChunkHandle& chunk);
  // Inserts only if total_size + length <= limit.
  bool insert_within(const backend::ChunkHandle& chunk, std::size_t limit);
  std::optional<backend::ChunkHandle> take_smallest();
  std::optional<backend::ChunkHandle> take_unpinned();
  std::vector<backend::ChunkHandle> drain();

  std::size_t total_size() const { return total_.load(std::memory_order_acquire); }
  std::size_t chunk_count() const;
  std::size_t pinned_bytes() const;
  std::size_t table_size() const { return table_size_; }
  // Chunk counts and bytes per bucket; index 0 is unused.
  std::vector<std::size_t> bucket_counts() const;
  std::vector<std::size_t> bucket_bytes() const;
  // Every chunk sits in bucket_index(length), non-top buckets hold
  // [b * min, (b + 1) * min), and total_size matches.
  bool check_invariants() const;

 private:
  std::size_t index_of(std::size_t length) const;
  void insert_locked(const backend::ChunkHandle& chunk);
  backend::ChunkHandle remove_locked(std::size_t bucket, std::size_t pos);

  const std::size_t min_mmap_size_;
  const std::size_t table_size_;
  mutable std::mutex mu_;
  std::vector<std::vector<backend::ChunkHandle>> buckets_;
  std::atomic<std::size_t> total_{0};
};

// Large chunks handed to the application. Entries handed out longer than
// requested wait here for the next round to shrink them.
class LargeChunkTable {
 public:
  void add(const backend::ChunkHandle& chunk, std::size_t requested);
  bool contains(std::uintptr_t base) const;
  std::size_t usable_size(std::uintptr_t base) const;

  // Removes the entry for `base`. Returns nullopt when a round is shrinking
  // the chunk; the round then completes the free. Throws ContractViolation
  // for unknown addresses.
  std::optional<backend::ChunkHandle> release(std::uintptr_t base);

  struct Shrink {
    backend::ChunkHandle chunk;
    std::size_t target = 0;
  };
  // Marks every pending entry as shrinking and returns them.
  std::vector<Shrink> begin_shrinks();
  // Completes a shrink. Returns the chunk when the application freed it
  // meanwhile, so the caller can dispose of it.
  std::optional<backend::ChunkHandle> finish_shrink(std::uintptr_t base,
                                                    const backend::ChunkHandle& resized);

  std::size_t size() const;
  std::size_t pending_shrinks() const;
  std::vector<backend::ChunkHandle> take_all();

 private:
  struct Entry {
    backend::ChunkHandle chunk;
    std::size_t requested = 0;
    bool pending_shrink = false;
    bool shrinking = false;
    bool free_deferred = false;
  };
  mutable std::mutex mu_;
  std::unordered_map<std::uintptr_t, Entry> live_;
};

// Disposition of a freed large chunk: back into the pool when that keeps it
// within trim_thr, otherwise unmapped.
void recycle_or_unmap(MmapPool& pool, backend::Backend& backend, const backend::ChunkHandle& chunk,
                      bool recycle, std::size_t trim_thr);

// One mmap management round: delayed shrink, re-pin recycled chunks,
// reserve when total_size < rsv_thr, release smallest chunks while above
// trim_thr.
void mmap_round(MmapPool& pool, LargeChunkTable& table, backend::Backend& backend,
                const Thresholds& thresholds, bool recycle, RoundReport& report);

}  // namespace fastalloc::alloc
