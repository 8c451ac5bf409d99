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
// Raw memory primitives behind the allocator.
//
// A Backend hands out two kinds of memory: one contiguous, growable Region
// per heap (the program-break analogue) and any number of disjoint anonymous
// chunks. Neither is resident until it is faulted, either by prefault() (which
// also pins the pages) or by touch(). Every public call is counted so callers
// can assert how many backend round trips a code path made; an optional event
// log records each call with its elapsed time.

#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fastalloc::backend {

// A caller broke a documented precondition (double free, foreign address,
// unpin of an unpinned page, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class StatsUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by the simulated backend when a fault finds nothing reclaimable.
class OutOfMemory : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AddressRange {
  std::uintptr_t begin = 0;
  std::size_t length = 0;

  std::uintptr_t end() const { return begin + length; }
  bool empty() const { return length == 0; }
  std::byte* data() const { return reinterpret_cast<std::byte*>(begin); }
  bool contains(const AddressRange& other) const {
    return other.begin >= begin && other.end() <= end();
  }
  bool overlaps(const AddressRange& other) const {
    return begin < other.end() && other.begin < end();
  }
  friend bool operator==(const AddressRange&, const AddressRange&) = default;
};

// base <= committed_end <= limit; committed_end - base is a page multiple.
struct Region {
  std::uintptr_t base = 0;
  std::uintptr_t committed_end = 0;
  std::uintptr_t limit = 0;

  std::size_t committed() const { return committed_end - base; }
  std::size_t headroom() const { return limit - committed_end; }
};

struct ChunkHandle {
  std::uintptr_t base = 0;
  std::size_t length = 0;
  bool pinned = false;

  AddressRange range() const { return {base, length}; }
  std::byte* data() const { return reinterpret_cast<std::byte*>(base); }
};

struct BackendStats {
  std::size_t total = 0;
  std::size_t available = 0;
  // Unused memory, page cache counted as used. Equals `available` in the
  // simulator; MemFree on Linux, where MemAvailable already counts
  // reclaimable cache as available.
  std::size_t free = 0;
  std::size_t file_cache = 0;
  std::size_t watermark_low = 0;
  std::size_t watermark_min = 0;
  // Bytes currently pinned through this backend.
  std::size_t pinned = 0;
  // Simulated backend only: resident anonymous and swapped-out bytes.
  std::size_t resident_anon = 0;
  std::size_t swapped = 0;

  double usage() const {
    return total == 0 ? 0.0 : static_cast<double>(total - available) / static_cast<double>(total);
  }
  // Fraction of memory in use including page cache.
  double occupancy() const {
    return total == 0 ? 0.0 : static_cast<double>(total - free) / static_cast<double>(total);
  }
};

enum class PrefaultMode { kPinned, kTouched };

struct PrefaultResult {
  std::chrono::nanoseconds elapsed{0};
  PrefaultMode mode = PrefaultMode::kPinned;
};

enum class AdviseResult { kReleased, kNotCached, kUnknownFile };

enum class BackendOp {
  kCreateRegion,
  kGrowRegion,
  kShrinkRegion,
  kReleaseRegion,
  kMapChunk,
  kUnmapChunk,
  kResizeChunk,
  kPrefault,
  kTouch,
  kUnpin,
  kStats,
  kAdvise,
  kLoadFile,
  kBackgroundReclaim,
};

std::string_view op_name(BackendOp op);

struct BackendEvent {
  std::uint64_t seq = 0;
  BackendOp op = BackendOp::kStats;
  std::size_t bytes = 0;
  std::chrono::nanoseconds elapsed{0};
  std::size_t available_after = 0;
};

// `seq,op,bytes,elapsed_us,available_after`
void write_event_csv(std::ostream& out, const std::vector<BackendEvent>& events);

class Backend {
 public:
  virtual ~Backend() = default;
  Backend() = default;
  Backend(const Backend&) = delete;
  Backend& operator=(const Backend&) = delete;

  virtual std::size_t page_size() const = 0;
  virtual bool simulated() const = 0;

  // Reserves address space for a region of at most `limit` bytes (page
  // rounded). Nothing is committed yet.
  Region create_region(std::size_t limit) {
    count_call();
    return do_create_region(limit);
  }

  // Returns [old_end, old_end + delta), or nullopt when the region limit
  // would be exceeded. Pages are not faulted.
  std::optional<AddressRange> grow_region(Region& region, std::size_t delta) {
    count_call();
    return do_grow_region(region, delta);
  }
  void shrink_region(Region& region, std::size_t delta) {
    count_call();
    do_shrink_region(region, delta);
  }
  void release_region(Region& region) {
    count_call();
    do_release_region(region);
  }

  // `size` must be a non-zero page multiple. nullopt when out of address space.
  std::optional<ChunkHandle> map_chunk(std::size_t size) {
    count_call();
    return do_map_chunk(size);
  }
  void unmap_chunk(const ChunkHandle& chunk) {
    count_call();
    do_unmap_chunk(chunk);
  }
  // Preserves the min(old, new) prefix. Shrinking keeps pins on the prefix;
  // growing clears them. nullopt when growth fails (the old handle stays valid).
  std::optional<ChunkHandle> resize_chunk(const ChunkHandle& chunk, std::size_t new_size) {
    count_call();
    return do_resize_chunk(chunk, new_size);
  }

  // Makes every page of `range` resident and pinned. When pinning is refused
  // the pages are touched instead and the result says so.
  PrefaultResult prefault(AddressRange range) {
    count_call();
    return do_prefault(range);
  }
  // Makes every page of `range` resident without pinning it.
  std::chrono::nanoseconds touch(AddressRange range) {
    count_call();
    return do_touch(range);
  }
  // Every page in `range` must currently be pinned.
  void unpin(AddressRange range) {
    count_call();
    do_unpin(range);
  }

  BackendStats memory_stats() {
    count_call();
    return do_memory_stats();
  }
  AdviseResult advise_release_file_cache(const std::string& file, std::size_t length) {
    count_call();
    return do_advise_release_file_cache(file, length);
  }

  // Number of public calls made so far, from any thread.
  std::uint64_t op_count() const { return op_count_.load(std::memory_order_acquire); }
  // Sum of elapsed time reported by every call (modeled for the simulator,
  // measured for the OS backend).
  std::chrono::nanoseconds total_elapsed() const {
    return std::chrono::nanoseconds{elapsed_total_.load(std::memory_order_acquire)};
  }

  void set_event_logging(bool enabled);
  std::vector<BackendEvent> events() const;
  void clear_events();

 protected:
  virtual Region do_create_region(std::size_t limit) = 0;
  virtual std::optional<AddressRange> do_grow_region(Region& region, std::size_t delta) = 0;
  virtual void do_shrink_region(Region& region, std::size_t delta) = 0;
  virtual void do_release_region(Region& region) = 0;
  virtual std::optional<ChunkHandle> do_map_chunk(std::size_t size) = 0;
  virtual void do_unmap_chunk(const ChunkHandle& chunk) = 0;
  virtual std::optional<ChunkHandle> do_resize_chunk(const ChunkHandle& chunk, std::size_t new_size) = 0;
  virtual PrefaultResult do_prefault(AddressRange range) = 0;
  virtual std::chrono::nanoseconds do_touch(AddressRange range) = 0;
  virtual void do_unpin(AddressRange range) = 0;
  virtual BackendStats do_memory_stats() = 0;
  virtual AdviseResult do_advise_release_file_cache(const std::string& file, std::size_t length) = 0;

  // Implementations call this once per completed operation (and for
  // internal events such as background reclaim).
  void record(BackendOp op, std::size_t bytes, std::chrono::nanoseconds elapsed,
              std::size_t available_after);

 private:
  void count_call() { op_count_.fetch_add(1, std::memory_order_acq_rel); }
  std::atomic<std::uint64_t> op_count_{0};
  std::atomic<std::int64_t> elapsed_total_{0};
  mutable std::mutex log_mu_;
  bool logging_ = false;
  std::uint64_t next_seq_ = 0;
  std::vector<BackendEvent> log_;
};

}  // namespace fastalloc::backend
