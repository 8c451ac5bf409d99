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
// Deterministic memory model.
//
// Addresses handed out are real (a NORESERVE anonymous reservation backs the
// whole simulated address space) so callers can read and write them, but
// residency, reclaim and cost are modeled:
//
//   * Every page faulted by prefault() or touch() costs `fault_cost`.
//   * If available memory is below watermark_min at fault time, the fault
//     first reclaims one page synchronously: a file-cache page when any is
//     cached (`reclaim_penalty_file`), else the oldest unpinned resident
//     anonymous page, which moves to swap (`reclaim_penalty_anon`).
//   * At the start of each mutating call, if available memory is below
//     watermark_low, background reclaim drops file cache for free until
//     available reaches watermark_high. Anonymous pages are never reclaimed
//     in the background.
//   * Pinned pages are never evicted.
//
// available + resident_anon + file_cache == capacity holds after every event.

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "fastalloc/backend/backend.h"
#include "fastalloc/common/kv_config.h"

namespace fastalloc::backend {

struct SimConfig {
  // Default fault cost measured on the development VM (touching 256 MB of
  // fresh anonymous memory); the penalties are swap write-out and clean
  // page-cache drop estimates.
  std::chrono::nanoseconds fault_cost{2400};
  std::chrono::nanoseconds reclaim_penalty_anon{50'000};
  std::chrono::nanoseconds reclaim_penalty_file{5'000};
  std::chrono::nanoseconds syscall_cost{0};
  std::size_t capacity = std::size_t{1} << 30;
  // Zero means "derive from capacity": min = 1/1000 of capacity,
  // low = 5/4 min, high = 3/2 min (page rounded).
  std::size_t watermark_min = 0;
  std::size_t watermark_low = 0;
  std::size_t watermark_high = 0;
  std::size_t address_space = std::size_t{8} << 30;
  bool background_reclaim = true;
  bool event_log = true;

  // Keys: fault_cost_us, reclaim_penalty_anon_us, reclaim_penalty_file_us,
  // syscall_cost_us, capacity, watermark_min, watermark_low, watermark_high,
  // address_space, background_reclaim, event_log.
  static SimConfig from_config(const KeyValueConfig& cfg);
  static SimConfig load(const std::string& path);

  // Fills derived watermarks; throws ConfigError on inconsistent values.
  SimConfig resolved(std::size_t page_size) const;
};

class SimBackend final : public Backend {
 public:
  static constexpr std::size_t kPageSize = 4096;

  explicit SimBackend(SimConfig config);
  ~SimBackend() override;

  std::size_t page_size() const override { return kPageSize; }
  bool simulated() const override { return true; }

  const SimConfig& config() const { return config_; }

  // Brings `bytes` of file `file` into the page cache (page rounded). Used by
  // pressure generators and daemon fixtures. Returns modeled elapsed time.
  std::chrono::nanoseconds load_file(const std::string& file, std::size_t bytes);
  std::size_t cached_bytes(const std::string& file) const;

  std::size_t live_chunk_count() const;
  std::size_t committed_region_bytes() const;

  // available + resident_anon + file_cache == capacity.
  bool conservation_holds() const;

 protected:
  Region do_create_region(std::size_t limit) override;
  std::optional<AddressRange> do_grow_region(Region& region, std::size_t delta) override;
  void do_shrink_region(Region& region, std::size_t delta) override;
  void do_release_region(Region& region) override;
  std::optional<ChunkHandle> do_map_chunk(std::size_t size) override;
  void do_unmap_chunk(const ChunkHandle& chunk) override;
  std::optional<ChunkHandle> do_resize_chunk(const ChunkHandle& chunk, std::size_t new_size) override;
  PrefaultResult do_prefault(AddressRange range) override;
  std::chrono::nanoseconds do_touch(AddressRange range) override;
  void do_unpin(AddressRange range) override;
  BackendStats do_memory_stats() override;
  AdviseResult do_advise_release_file_cache(const std::string& file, std::size_t length) override;

 private:
  enum class PageState : std::uint8_t { kAbsent, kResident, kSwapped };
  struct Page {
    PageState state = PageState::kAbsent;
    bool pinned = false;
    std::uint32_t stamp = 0;  // matches the eviction queue entry that is live
  };
  struct FileCache {
    std::size_t cached = 0;
    std::uint64_t order = 0;
  };
  struct RegionInfo {
    std::uintptr_t committed_end = 0;
    std::uintptr_t limit = 0;
  };

  std::size_t page_index(std::uintptr_t addr) const { return (addr - arena_base_) / kPageSize; }
  std::uintptr_t page_addr(std::size_t index) const { return arena_base_ + index * kPageSize; }

  std::optional<std::uintptr_t> reserve_addresses(std::size_t bytes);
  bool try_extend_in_place(std::uintptr_t end, std::size_t extra);
  void free_addresses(std::uintptr_t begin, std::size_t bytes);

  void background_reclaim_locked();
  std::chrono::nanoseconds fault_page_locked(std::size_t index, bool pin);
  std::chrono::nanoseconds reclaim_one_locked();
  std::size_t drop_file_pages_locked(std::size_t pages);
  void release_pages_locked(std::uintptr_t begin, std::size_t bytes);
  void enqueue_locked(std::size_t index);
  void check_faultable_locked(AddressRange range) const;
  void log_locked(BackendOp op, std::size_t bytes, std::chrono::nanoseconds elapsed);

  const SimConfig config_;
  mutable std::mutex mu_;

  std::byte* arena_ = nullptr;
  std::uintptr_t arena_base_ = 0;
  std::size_t arena_bytes_ = 0;

  std::vector<Page> pages_;
  std::deque<std::pair<std::size_t, std::uint32_t>> eviction_queue_;
  std::uint32_t next_stamp_ = 1;

  std::map<std::uintptr_t, std::size_t> free_ranges_;
  std::map<std::uintptr_t, std::size_t> chunks_;
  std::map<std::uintptr_t, RegionInfo> regions_;
  std::map<std::string, FileCache> files_;
  std::uint64_t next_file_order_ = 0;

  std::size_t available_ = 0;
  std::size_t resident_anon_ = 0;
  std::size_t file_cache_ = 0;
  std::size_t swapped_ = 0;
  std::size_t pinned_ = 0;
};

}  // namespace fastalloc::backend
