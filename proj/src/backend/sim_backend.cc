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

#include "fastalloc/backend/sim_backend.h"

#include <sys/mman.h>

#include <algorithm>
#include <cstring>
#include <system_error>

#include "fastalloc/common/units.h"

namespace fastalloc::backend {

using std::chrono::nanoseconds;

SimConfig SimConfig::from_config(const KeyValueConfig& cfg) {
  cfg.reject_unknown({"fault_cost_us", "reclaim_penalty_anon_us", "reclaim_penalty_file_us",
                      "syscall_cost_us", "capacity", "watermark_min", "watermark_low",
                      "watermark_high", "address_space", "background_reclaim", "event_log"});
  SimConfig c;
  if (cfg.has("fault_cost_us")) c.fault_cost = from_us(cfg.get_double("fault_cost_us"));
  if (cfg.has("reclaim_penalty_anon_us")) {
    c.reclaim_penalty_anon = from_us(cfg.get_double("reclaim_penalty_anon_us"));
  }
  if (cfg.has("reclaim_penalty_file_us")) {
    c.reclaim_penalty_file = from_us(cfg.get_double("reclaim_penalty_file_us"));
  }
  if (cfg.has("syscall_cost_us")) c.syscall_cost = from_us(cfg.get_double("syscall_cost_us"));
  if (cfg.has("capacity")) c.capacity = cfg.get_size("capacity");
  if (cfg.has("watermark_min")) c.watermark_min = cfg.get_size("watermark_min");
  if (cfg.has("watermark_low")) c.watermark_low = cfg.get_size("watermark_low");
  if (cfg.has("watermark_high")) c.watermark_high = cfg.get_size("watermark_high");
  if (cfg.has("address_space")) c.address_space = cfg.get_size("address_space");
  if (cfg.has("background_reclaim")) c.background_reclaim = cfg.get_bool("background_reclaim");
  if (cfg.has("event_log")) c.event_log = cfg.get_bool("event_log");
  return c;
}

SimConfig SimConfig::load(const std::string& path) {
  return from_config(KeyValueConfig::load(path));
}

SimConfig SimConfig::resolved(std::size_t page) const {
  SimConfig c = *this;
  c.capacity = round_down(c.capacity, page);
  c.address_space = round_up(c.address_space, page);
  if (c.watermark_min == 0) c.watermark_min = std::max(page, round_up(c.capacity / 1000, page));
  if (c.watermark_low == 0) c.watermark_low = round_up(c.watermark_min * 5 / 4, page);
  if (c.watermark_high == 0) c.watermark_high = round_up(c.watermark_min * 3 / 2, page);
  c.watermark_min = round_up(c.watermark_min, page);
  c.watermark_low = round_up(c.watermark_low, page);
  c.watermark_high = round_up(c.watermark_high, page);

  if (c.capacity == 0) throw ConfigError("capacity must be positive");
  if (!(c.watermark_min < c.watermark_low && c.watermark_low < c.capacity)) {
    throw ConfigError("watermarks must satisfy min < low < capacity");
  }
  if (c.watermark_high < c.watermark_low || c.watermark_high > c.capacity) {
    throw ConfigError("watermark_high must lie in [low, capacity]");
  }
  if (!(c.reclaim_penalty_anon > c.reclaim_penalty_file && c.reclaim_penalty_file > nanoseconds{0})) {
    throw ConfigError("reclaim penalties must satisfy anon > file > 0");
  }
  if (c.fault_cost < nanoseconds{0} || c.syscall_cost < nanoseconds{0}) {
    throw ConfigError("costs must be non-negative");
  }
  if (c.address_space < 16 * page) throw ConfigError("address_space too small");
  return c;
}

SimBackend::SimBackend(SimConfig config) : config_(config.resolved(kPageSize)) {
  arena_bytes_ = config_.address_space;
  void* p = ::mmap(nullptr, arena_bytes_, PROT_READ | PROT_WRITE,
                   MAP_PRIVATE | MAP_ANONYMOUS | MAP_NORESERVE, -1, 0);
  if (p == MAP_FAILED) {
    throw std::system_error(errno, std::generic_category(), "sim backend address reservation");
  }
  arena_ = static_cast<std::byte*>(p);
  arena_base_ = reinterpret_cast<std::uintptr_t>(p);
  pages_.resize(arena_bytes_ / kPageSize);
  free_ranges_.emplace(arena_base_, arena_bytes_);
  available_ = config_.capacity;
  set_event_logging(config_.event_log);
}

SimBackend::~SimBackend() {
  if (arena_ != nullptr) ::munmap(arena_, arena_bytes_);
}

// ---------------------------------------------------------------------------
// Address space bookkeeping.

std::optional<std::uintptr_t> SimBackend::reserve_addresses(std::size_t bytes) {
  for (auto it = free_ranges_.begin(); it != free_ranges_.end(); ++it) {
    if (it->second < bytes) continue;
    std::uintptr_t begin = it->first;
    std::size_t rest = it->second - bytes;
    free_ranges_.erase(it);
    if (rest != 0) free_ranges_.emplace(begin + bytes, rest);
    return begin;
  }
  return std::nullopt;
}

bool SimBackend::try_extend_in_place(std::uintptr_t end, std::size_t extra) {
  auto it = free_ranges_.find(end);
  if (it == free_ranges_.end() || it->second < extra) return false;
  std::size_t rest = it->second - extra;
  free_ranges_.erase(it);
  if (rest != 0) free_ranges_.emplace(end + extra, rest);
  return true;
}

void SimBackend::free_addresses(std::uintptr_t begin, std::size_t bytes) {
  auto [it, inserted] = free_ranges_.emplace(begin, bytes);
  (void)inserted;
  auto next = std::next(it);
  if (next != free_ranges_.end() && it->first + it->second == next->first) {
    it->second += next->second;
    free_ranges_.erase(next);
  }
  if (it != free_ranges_.begin()) {
    auto prev = std::prev(it);
    if (prev->first + prev->second == it->first) {
      prev->second += it->second;
      free_ranges_.erase(it);
    }
  }
}

// ---------------------------------------------------------------------------
// Residency model.

void SimBackend::log_locked(BackendOp op, std::size_t bytes, nanoseconds elapsed) {
  record(op, bytes, elapsed, available_);
}

void SimBackend::enqueue_locked(std::size_t index) {
  Page& page = pages_[index];
  page.stamp = next_stamp_++;
  if (next_stamp_ == 0) next_stamp_ = 1;
  eviction_queue_.emplace_back(index, page.stamp);
}

std::size_t SimBackend::drop_file_pages_locked(std::size_t pages) {
  std::size_t dropped = 0;
  while (dropped < pages && file_cache_ != 0) {
    // Oldest-loaded file first.
    auto victim = files_.end();
    for (auto it = files_.begin(); it != files_.end(); ++it) {
      if (it->second.cached == 0) continue;
      if (victim == files_.end() || it->second.order < victim->second.order) victim = it;
    }
    if (victim == files_.end()) break;
    std::size_t take = std::min(pages - dropped, victim->second.cached / kPageSize);
    victim->second.cached -= take * kPageSize;
    file_cache_ -= take * kPageSize;
    available_ += take * kPageSize;
    dropped += take;
  }
  return dropped;
}

void SimBackend::background_reclaim_locked() {
  if (!config_.background_reclaim || available_ >= config_.watermark_low || file_cache_ == 0) return;
  std::size_t want = ceil_div(config_.watermark_high - available_, kPageSize);
  std::size_t dropped = drop_file_pages_locked(want);
  if (dropped != 0) log_locked(BackendOp::kBackgroundReclaim, dropped * kPageSize, nanoseconds{0});
}

nanoseconds SimBackend::reclaim_one_locked() {
  if (file_cache_ != 0) {
    drop_file_pages_locked(1);
    return config_.reclaim_penalty_file;
  }
  while (!eviction_queue_.empty()) {
    auto [index, stamp] = eviction_queue_.front();
    eviction_queue_.pop_front();
    Page& page = pages_[index];
    if (page.state != PageState::kResident || page.pinned || page.stamp != stamp) continue;
    page.state = PageState::kSwapped;
    page.stamp = 0;
    resident_anon_ -= kPageSize;
    swapped_ += kPageSize;
    available_ += kPageSize;
    return config_.reclaim_penalty_anon;
  }
  throw OutOfMemory("simulated memory exhausted: nothing reclaimable");
}

nanoseconds SimBackend::fault_page_locked(std::size_t index, bool pin) {
  Page& page = pages_[index];
  if (page.state == PageState::kResident) {
    if (pin && !page.pinned) {
      page.pinned = true;
      page.stamp = 0;
      pinned_ += kPageSize;
    }
    return nanoseconds{0};
  }
  nanoseconds cost{0};
  if (available_ < config_.watermark_min) cost += reclaim_one_locked();
  if (page.state == PageState::kSwapped) swapped_ -= kPageSize;
  available_ -= kPageSize;
  resident_anon_ += kPageSize;
  page.state = PageState::kResident;
  if (pin) {
    page.pinned = true;
    page.stamp = 0;
    pinned_ += kPageSize;
  } else {
    enqueue_locked(index);
  }
  return cost + config_.fault_cost;
}

void SimBackend::release_pages_locked(std::uintptr_t begin, std::size_t bytes) {
  if (bytes == 0) return;
  const std::size_t first = page_index(begin);
  const std::size_t count = bytes / kPageSize;
  for (std::size_t i = first; i < first + count; ++i) {
    Page& page = pages_[i];
    if (page.state == PageState::kResident) {
      available_ += kPageSize;
      resident_anon_ -= kPageSize;
    } else if (page.state == PageState::kSwapped) {
      swapped_ -= kPageSize;
    }
    if (page.pinned) pinned_ -= kPageSize;
    page = Page{};
  }
  ::madvise(reinterpret_cast<void*>(begin), bytes, MADV_DONTNEED);
}

void SimBackend::check_faultable_locked(AddressRange range) const {
  if (!regions_.empty()) {
    auto it = regions_.upper_bound(range.begin);
    if (it != regions_.begin()) {
      --it;
      if (range.begin >= it->first && range.end() <= it->second.committed_end) return;
    }
  }
  if (!chunks_.empty()) {
    auto it = chunks_.upper_bound(range.begin);
    if (it != chunks_.begin()) {
      --it;
      if (range.begin >= it->first && range.end() <= it->first + it->second) return;
    }
  }
  throw ContractViolation("range is not inside a committed region or a live chunk");
}

// ---------------------------------------------------------------------------
// Operations.

Region SimBackend::do_create_region(std::size_t limit) {
  std::lock_guard lock(mu_);
  background_reclaim_locked();
  limit = round_up(std::max(limit, kPageSize), kPageSize);
  auto base = reserve_addresses(limit);
  if (!base) throw OutOfMemory("simulated address space exhausted");
  regions_.emplace(*base, RegionInfo{*base, *base + limit});
  log_locked(BackendOp::kCreateRegion, limit, config_.syscall_cost);
  return Region{*base, *base, *base + limit};
}

std::optional<AddressRange> SimBackend::do_grow_region(Region& region, std::size_t delta) {
  std::lock_guard lock(mu_);
  auto it = regions_.find(region.base);
  if (it == regions_.end() || it->second.committed_end != region.committed_end) {
    throw ContractViolation("grow_region: unknown or stale region");
  }
  if (!is_aligned(delta, kPageSize)) throw ContractViolation("grow_region: delta not page aligned");
  background_reclaim_locked();
  AddressRange grown{region.committed_end, 0};
  if (delta != 0) {
    if (delta > region.limit - region.committed_end) {
      log_locked(BackendOp::kGrowRegion, 0, config_.syscall_cost);
      return std::nullopt;
    }
    region.committed_end += delta;
    it->second.committed_end = region.committed_end;
    grown.length = delta;
  }
  log_locked(BackendOp::kGrowRegion, delta, delta == 0 ? nanoseconds{0} : config_.syscall_cost);
  return grown;
}

void SimBackend::do_shrink_region(Region& region, std::size_t delta) {
  std::lock_guard lock(mu_);
  auto it = regions_.find(region.base);
  if (it == regions_.end() || it->second.committed_end != region.committed_end) {
    throw ContractViolation("shrink_region: unknown or stale region");
  }
  if (!is_aligned(delta, kPageSize)) throw ContractViolation("shrink_region: delta not page aligned");
  if (delta > region.committed()) throw ContractViolation("shrink_region: delta exceeds committed size");
  background_reclaim_locked();
  if (delta == 0) {
    log_locked(BackendOp::kShrinkRegion, 0, nanoseconds{0});
    return;
  }
  region.committed_end -= delta;
  it->second.committed_end = region.committed_end;
  release_pages_locked(region.committed_end, delta);
  log_locked(BackendOp::kShrinkRegion, delta, config_.syscall_cost);
}

void SimBackend::do_release_region(Region& region) {
  std::lock_guard lock(mu_);
  auto it = regions_.find(region.base);
  if (it == regions_.end()) throw ContractViolation("release_region: unknown region");
  release_pages_locked(region.base, it->second.committed_end - region.base);
  free_addresses(region.base, region.limit - region.base);
  regions_.erase(it);
  log_locked(BackendOp::kReleaseRegion, region.committed(), config_.syscall_cost);
  region.committed_end = region.base;
}

std::optional<ChunkHandle> SimBackend::do_map_chunk(std::size_t size) {
  std::lock_guard lock(mu_);
  if (size == 0 || !is_aligned(size, kPageSize)) {
    throw ContractViolation("map_chunk: size must be a non-zero page multiple");
  }
  background_reclaim_locked();
  auto base = reserve_addresses(size);
  if (!base) {
    log_locked(BackendOp::kMapChunk, 0, config_.syscall_cost);
    return std::nullopt;
  }
  chunks_.emplace(*base, size);
  log_locked(BackendOp::kMapChunk, size, config_.syscall_cost);
  return ChunkHandle{*base, size, false};
}

void SimBackend::do_unmap_chunk(const ChunkHandle& chunk) {
  std::lock_guard lock(mu_);
  auto it = chunks_.find(chunk.base);
  if (it == chunks_.end() || it->second != chunk.length) {
    throw ContractViolation("unmap_chunk: not a live chunk");
  }
  background_reclaim_locked();
  release_pages_locked(chunk.base, chunk.length);
  free_addresses(chunk.base, chunk.length);
  chunks_.erase(it);
  log_locked(BackendOp::kUnmapChunk, chunk.length, config_.syscall_cost);
}

std::optional<ChunkHandle> SimBackend::do_resize_chunk(const ChunkHandle& chunk, std::size_t new_size) {
  std::lock_guard lock(mu_);
  auto it = chunks_.find(chunk.base);
  if (it == chunks_.end() || it->second != chunk.length) {
    throw ContractViolation("resize_chunk: not a live chunk");
  }
  if (new_size == 0 || !is_aligned(new_size, kPageSize)) {
    throw ContractViolation("resize_chunk: size must be a non-zero page multiple");
  }
  background_reclaim_locked();
  if (new_size == chunk.length) {
    log_locked(BackendOp::kResizeChunk, new_size, nanoseconds{0});
    return chunk;
  }
  if (new_size < chunk.length) {
    std::size_t tail = chunk.length - new_size;
    release_pages_locked(chunk.base + new_size, tail);
    free_addresses(chunk.base + new_size, tail);
    it->second = new_size;
    log_locked(BackendOp::kResizeChunk, new_size, config_.syscall_cost);
    return ChunkHandle{chunk.base, new_size, chunk.pinned};
  }

  // Growth clears pins on the whole chunk.
  const std::size_t first = page_index(chunk.base);
  for (std::size_t i = first; i < first + chunk.length / kPageSize; ++i) {
    if (pages_[i].pinned) {
      pages_[i].pinned = false;
      pinned_ -= kPageSize;
      enqueue_locked(i);
    }
  }
  if (try_extend_in_place(chunk.base + chunk.length, new_size - chunk.length)) {
    it->second = new_size;
    log_locked(BackendOp::kResizeChunk, new_size, config_.syscall_cost);
    return ChunkHandle{chunk.base, new_size, false};
  }
  auto moved = reserve_addresses(new_size);
  if (!moved) {
    log_locked(BackendOp::kResizeChunk, 0, config_.syscall_cost);
    return std::nullopt;
  }
  const std::size_t dest = page_index(*moved);
  for (std::size_t i = 0; i < chunk.length / kPageSize; ++i) {
    pages_[dest + i] = pages_[first + i];
    pages_[first + i] = Page{};
    if (pages_[dest + i].state == PageState::kResident) enqueue_locked(dest + i);
  }
  std::memcpy(reinterpret_cast<void*>(*moved), reinterpret_cast<const void*>(chunk.base), chunk.length);
  ::madvise(reinterpret_cast<void*>(chunk.base), chunk.length, MADV_DONTNEED);
  free_addresses(chunk.base, chunk.length);
  chunks_.erase(it);
  chunks_.emplace(*moved, new_size);
  log_locked(BackendOp::kResizeChunk, new_size, config_.syscall_cost);
  return ChunkHandle{*moved, new_size, false};
}

PrefaultResult SimBackend::do_prefault(AddressRange range) {
  std::lock_guard lock(mu_);
  if (range.empty()) {
    log_locked(BackendOp::kPrefault, 0, nanoseconds{0});
    return {nanoseconds{0}, PrefaultMode::kPinned};
  }
  AddressRange pages{round_down(range.begin, kPageSize),
                     round_up(range.end(), kPageSize) - round_down(range.begin, kPageSize)};
  check_faultable_locked(pages);
  background_reclaim_locked();
  nanoseconds elapsed = config_.syscall_cost;
  const std::size_t first = page_index(pages.begin);
  for (std::size_t i = first; i < first + pages.length / kPageSize; ++i) {
    elapsed += fault_page_locked(i, /*pin=*/true);
  }
  log_locked(BackendOp::kPrefault, pages.length, elapsed);
  return {elapsed, PrefaultMode::kPinned};
}

nanoseconds SimBackend::do_touch(AddressRange range) {
  std::lock_guard lock(mu_);
  if (range.empty()) {
    log_locked(BackendOp::kTouch, 0, nanoseconds{0});
    return nanoseconds{0};
  }
  AddressRange pages{round_down(range.begin, kPageSize),
                     round_up(range.end(), kPageSize) - round_down(range.begin, kPageSize)};
  check_faultable_locked(pages);
  background_reclaim_locked();
  nanoseconds elapsed{0};
  const std::size_t first = page_index(pages.begin);
  for (std::size_t i = first; i < first + pages.length / kPageSize; ++i) {
    elapsed += fault_page_locked(i, /*pin=*/false);
  }
  log_locked(BackendOp::kTouch, pages.length, elapsed);
  return elapsed;
}

void SimBackend::do_unpin(AddressRange range) {
  std::lock_guard lock(mu_);
  if (range.empty()) return;
  AddressRange pages{round_down(range.begin, kPageSize),
                     round_up(range.end(), kPageSize) - round_down(range.begin, kPageSize)};
  if (pages.begin < arena_base_ || pages.end() > arena_base_ + arena_bytes_) {
    throw ContractViolation("unpin: range outside the simulated address space");
  }
  const std::size_t first = page_index(pages.begin);
  const std::size_t count = pages.length / kPageSize;
  for (std::size_t i = first; i < first + count; ++i) {
    if (!pages_[i].pinned) throw ContractViolation("unpin: page was never pinned");
  }
  background_reclaim_locked();
  for (std::size_t i = first; i < first + count; ++i) {
    pages_[i].pinned = false;
    pinned_ -= kPageSize;
    enqueue_locked(i);
  }
  log_locked(BackendOp::kUnpin, pages.length, config_.syscall_cost);
}

BackendStats SimBackend::do_memory_stats() {
  std::lock_guard lock(mu_);
  BackendStats s;
  s.total = config_.capacity;
  s.available = available_;
  s.free = available_;
  s.file_cache = file_cache_;
  s.watermark_low = config_.watermark_low;
  s.watermark_min = config_.watermark_min;
  s.pinned = pinned_;
  s.resident_anon = resident_anon_;
  s.swapped = swapped_;
  return s;
}

AdviseResult SimBackend::do_advise_release_file_cache(const std::string& file, std::size_t length) {
  std::lock_guard lock(mu_);
  background_reclaim_locked();
  auto it = files_.find(file);
  if (it == files_.end()) {
    log_locked(BackendOp::kAdvise, 0, nanoseconds{0});
    return AdviseResult::kUnknownFile;
  }
  if (it->second.cached == 0) {
    log_locked(BackendOp::kAdvise, 0, config_.syscall_cost);
    return AdviseResult::kNotCached;
  }
  std::size_t release = length == 0 ? it->second.cached
                                     : std::min(round_up(length, kPageSize), it->second.cached);
  it->second.cached -= release;
  file_cache_ -= release;
  available_ += release;
  log_locked(BackendOp::kAdvise, release, config_.syscall_cost);
  return AdviseResult::kReleased;
}

nanoseconds SimBackend::load_file(const std::string& file, std::size_t bytes) {
  std::lock_guard lock(mu_);
  background_reclaim_locked();
  auto [it, inserted] = files_.try_emplace(file);
  if (inserted) it->second.order = next_file_order_++;
  std::size_t pages = ceil_div(bytes, kPageSize);
  nanoseconds elapsed{0};
  while (pages != 0) {
    std::size_t batch = 1;
    if (available_ < config_.watermark_min) {
      elapsed += reclaim_one_locked();
    } else {
      batch = std::min(pages, (available_ - config_.watermark_min) / kPageSize + 1);
    }
    available_ -= batch * kPageSize;
    it->second.cached += batch * kPageSize;
    file_cache_ += batch * kPageSize;
    elapsed += config_.fault_cost * static_cast<std::int64_t>(batch);
    pages -= batch;
  }
  log_locked(BackendOp::kLoadFile, round_up(bytes, kPageSize), elapsed);
  return elapsed;
}

std::size_t SimBackend::cached_bytes(const std::string& file) const {
  std::lock_guard lock(mu_);
  auto it = files_.find(file);
  return it == files_.end() ? 0 : it->second.cached;
}

std::size_t SimBackend::live_chunk_count() const {
  std::lock_guard lock(mu_);
  return chunks_.size();
}

std::size_t SimBackend::committed_region_bytes() const {
  std::lock_guard lock(mu_);
  std::size_t total = 0;
  for (const auto& [base, info] : regions_) total += info.committed_end - base;
  return total;
}

bool SimBackend::conservation_holds() const {
  std::lock_guard lock(mu_);
  return available_ + resident_anon_ + file_cache_ == config_.capacity;
}

}  // namespace fastalloc::backend
