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

#include "fastalloc/backend/os_backend.h"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <fstream>
#include <sstream>
#include <system_error>
#include <vector>

#include "fastalloc/common/units.h"

namespace fastalloc::backend {

namespace {

using Clock = std::chrono::steady_clock;

std::chrono::nanoseconds since(Clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start);
}

std::string slurp(const char* path) {
  std::ifstream in(path);
  if (!in) return {};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void touch_pages(std::uintptr_t begin, std::size_t length, std::size_t page) {
  for (std::uintptr_t p = begin; p < begin + length; p += page) {
    // Atomic no-op RMW: forces a write fault without racing other writers.
    std::atomic_ref<unsigned char>(*reinterpret_cast<unsigned char*>(p))
        .fetch_or(0, std::memory_order_relaxed);
  }
}

class Fd {
 public:
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  int get() const { return fd_; }

 private:
  int fd_;
};

}  // namespace

std::optional<std::size_t> file_cached_bytes(const std::string& path) {
  Fd fd(::open(path.c_str(), O_RDONLY | O_CLOEXEC));
  if (fd.get() < 0) return std::nullopt;
  struct stat st {};
  if (::fstat(fd.get(), &st) != 0 || !S_ISREG(st.st_mode)) return std::nullopt;
  if (st.st_size == 0) return 0;
  const auto page = static_cast<std::size_t>(::sysconf(_SC_PAGESIZE));
  const auto size = static_cast<std::size_t>(st.st_size);
  void* map = ::mmap(nullptr, size, PROT_READ, MAP_SHARED, fd.get(), 0);
  if (map == MAP_FAILED) return std::nullopt;
  std::vector<unsigned char> vec(ceil_div(size, page));
  std::size_t cached = 0;
  if (::mincore(map, size, vec.data()) == 0) {
    for (std::size_t i = 0; i < vec.size(); ++i) {
      if (vec[i] & 1) cached += std::min(page, size - i * page);
    }
  }
  ::munmap(map, size);
  return cached;
}

BackendStats parse_proc_stats(const std::string& meminfo, const std::string& zoneinfo,
                              std::size_t page_size) {
  std::map<std::string, std::size_t> kb;
  std::istringstream mi(meminfo);
  std::string line;
  while (std::getline(mi, line)) {
    auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::istringstream rest(line.substr(colon + 1));
    std::size_t value = 0;
    if (rest >> value) kb[line.substr(0, colon)] = value;
  }
  auto need = [&](const char* key) {
    auto it = kb.find(key);
    if (it == kb.end()) throw StatsUnavailable(std::string("meminfo lacks ") + key);
    return it->second * kKiB;
  };
  BackendStats s;
  s.total = need("MemTotal");
  s.available = need("MemAvailable");
  s.free = kb.count("MemFree") ? kb["MemFree"] * kKiB : s.available;
  s.file_cache = need("Cached");
  if (kb.count("AnonPages")) s.resident_anon = kb["AnonPages"] * kKiB;
  if (kb.count("SwapTotal") && kb.count("SwapFree")) {
    s.swapped = (kb["SwapTotal"] - kb["SwapFree"]) * kKiB;
  }

  std::size_t min_pages = 0;
  std::size_t low_pages = 0;
  std::istringstream zi(zoneinfo);
  while (std::getline(zi, line)) {
    std::istringstream words(line);
    std::string key;
    std::size_t value = 0;
    if (!(words >> key >> value)) continue;
    if (key == "min") min_pages += value;
    if (key == "low") low_pages += value;
  }
  s.watermark_min = min_pages * page_size;
  s.watermark_low = low_pages * page_size;
  if (s.watermark_min == 0 || s.watermark_low <= s.watermark_min) {
    // zoneinfo hidden (some containers): fall back to the kernel's usual ratio.
    s.watermark_min = std::max(page_size, s.total / 1000);
    s.watermark_low = s.watermark_min * 5 / 4;
  }
  return s;
}

OsBackend::OsBackend() : page_size_(static_cast<std::size_t>(::sysconf(_SC_PAGESIZE))) {}

OsBackend::~OsBackend() {
  std::lock_guard lock(mu_);
  for (const auto& [base, region] : regions_) ::munmap(reinterpret_cast<void*>(base), region.limit - base);
  for (const auto& [base, length] : chunks_) ::munmap(reinterpret_cast<void*>(base), length);
}

std::size_t OsBackend::pinned_bytes() const {
  std::lock_guard lock(mu_);
  return pinned_.bytes();
}

AddressRange OsBackend::page_span(AddressRange range) const {
  std::uintptr_t b = round_down(range.begin, page_size_);
  return {b, round_up(range.end(), page_size_) - b};
}

void OsBackend::check_faultable(AddressRange range) const {
  auto r = regions_.upper_bound(range.begin);
  if (r != regions_.begin()) {
    --r;
    if (range.begin >= r->first && range.end() <= r->second.committed_end) return;
  }
  auto c = chunks_.upper_bound(range.begin);
  if (c != chunks_.begin()) {
    --c;
    if (range.begin >= c->first && range.end() <= c->first + c->second) return;
  }
  throw ContractViolation("range is not inside a committed region or a live chunk");
}

void OsBackend::drop_pins(std::uintptr_t begin, std::uintptr_t end) {
  for (const auto& [b, e] : pinned_.overlap(begin, end)) ::munlock(reinterpret_cast<void*>(b), e - b);
  pinned_.erase(begin, end);
}

Region OsBackend::do_create_region(std::size_t limit) {
  auto start = Clock::now();
  limit = round_up(std::max(limit, page_size_), page_size_);
  void* p = ::mmap(nullptr, limit, PROT_NONE, MAP_PRIVATE | MAP_ANONYMOUS | MAP_NORESERVE, -1, 0);
  if (p == MAP_FAILED) throw std::system_error(errno, std::generic_category(), "region reservation");
  auto base = reinterpret_cast<std::uintptr_t>(p);
  Region region{base, base, base + limit};
  {
    std::lock_guard lock(mu_);
    regions_.emplace(base, region);
  }
  record(BackendOp::kCreateRegion, limit, since(start), 0);
  return region;
}

std::optional<AddressRange> OsBackend::do_grow_region(Region& region, std::size_t delta) {
  auto start = Clock::now();
  if (!is_aligned(delta, page_size_)) throw ContractViolation("grow_region: delta not page aligned");
  std::lock_guard lock(mu_);
  auto it = regions_.find(region.base);
  if (it == regions_.end() || it->second.committed_end != region.committed_end) {
    throw ContractViolation("grow_region: unknown or stale region");
  }
  AddressRange grown{region.committed_end, 0};
  if (delta != 0) {
    if (delta > region.headroom() ||
        ::mprotect(reinterpret_cast<void*>(region.committed_end), delta, PROT_READ | PROT_WRITE) != 0) {
      record(BackendOp::kGrowRegion, 0, since(start), 0);
      return std::nullopt;
    }
    region.committed_end += delta;
    it->second.committed_end = region.committed_end;
    grown.length = delta;
  }
  record(BackendOp::kGrowRegion, delta, since(start), 0);
  return grown;
}

void OsBackend::do_shrink_region(Region& region, std::size_t delta) {
  auto start = Clock::now();
  if (!is_aligned(delta, page_size_)) throw ContractViolation("shrink_region: delta not page aligned");
  std::lock_guard lock(mu_);
  auto it = regions_.find(region.base);
  if (it == regions_.end() || it->second.committed_end != region.committed_end) {
    throw ContractViolation("shrink_region: unknown or stale region");
  }
  if (delta > region.committed()) throw ContractViolation("shrink_region: delta exceeds committed size");
  if (delta != 0) {
    std::uintptr_t new_end = region.committed_end - delta;
    drop_pins(new_end, region.committed_end);
    ::madvise(reinterpret_cast<void*>(new_end), delta, MADV_DONTNEED);
    ::mprotect(reinterpret_cast<void*>(new_end), delta, PROT_NONE);
    region.committed_end = new_end;
    it->second.committed_end = new_end;
  }
  record(BackendOp::kShrinkRegion, delta, since(start), 0);
}

void OsBackend::do_release_region(Region& region) {
  auto start = Clock::now();
  std::lock_guard lock(mu_);
  auto it = regions_.find(region.base);
  if (it == regions_.end()) throw ContractViolation("release_region: unknown region");
  drop_pins(region.base, it->second.limit);
  ::munmap(reinterpret_cast<void*>(region.base), it->second.limit - region.base);
  std::size_t committed = it->second.committed();
  regions_.erase(it);
  region.committed_end = region.base;
  record(BackendOp::kReleaseRegion, committed, since(start), 0);
}

std::optional<ChunkHandle> OsBackend::do_map_chunk(std::size_t size) {
  auto start = Clock::now();
  if (size == 0 || !is_aligned(size, page_size_)) {
    throw ContractViolation("map_chunk: size must be a non-zero page multiple");
  }
  void* p = ::mmap(nullptr, size, PROT_READ | PROT_WRITE, MAP_PRIVATE | MAP_ANONYMOUS, -1, 0);
  if (p == MAP_FAILED) {
    record(BackendOp::kMapChunk, 0, since(start), 0);
    return std::nullopt;
  }
  auto base = reinterpret_cast<std::uintptr_t>(p);
  {
    std::lock_guard lock(mu_);
    chunks_.emplace(base, size);
  }
  record(BackendOp::kMapChunk, size, since(start), 0);
  return ChunkHandle{base, size, false};
}

void OsBackend::do_unmap_chunk(const ChunkHandle& chunk) {
  auto start = Clock::now();
  std::lock_guard lock(mu_);
  auto it = chunks_.find(chunk.base);
  if (it == chunks_.end() || it->second != chunk.length) {
    throw ContractViolation("unmap_chunk: not a live chunk");
  }
  pinned_.erase(chunk.base, chunk.base + chunk.length);
  ::munmap(reinterpret_cast<void*>(chunk.base), chunk.length);
  chunks_.erase(it);
  record(BackendOp::kUnmapChunk, chunk.length, since(start), 0);
}

std::optional<ChunkHandle> OsBackend::do_resize_chunk(const ChunkHandle& chunk, std::size_t new_size) {
  auto start = Clock::now();
  if (new_size == 0 || !is_aligned(new_size, page_size_)) {
    throw ContractViolation("resize_chunk: size must be a non-zero page multiple");
  }
  std::lock_guard lock(mu_);
  auto it = chunks_.find(chunk.base);
  if (it == chunks_.end() || it->second != chunk.length) {
    throw ContractViolation("resize_chunk: not a live chunk");
  }
  if (new_size == chunk.length) {
    record(BackendOp::kResizeChunk, new_size, since(start), 0);
    return chunk;
  }
  if (new_size > chunk.length) drop_pins(chunk.base, chunk.base + chunk.length);
  void* p = ::mremap(reinterpret_cast<void*>(chunk.base), chunk.length, new_size, MREMAP_MAYMOVE);
  if (p == MAP_FAILED) {
    record(BackendOp::kResizeChunk, 0, since(start), 0);
    return std::nullopt;
  }
  auto base = reinterpret_cast<std::uintptr_t>(p);
  if (new_size < chunk.length) pinned_.erase(chunk.base + new_size, chunk.base + chunk.length);
  chunks_.erase(it);
  chunks_.emplace(base, new_size);
  record(BackendOp::kResizeChunk, new_size, since(start), 0);
  return ChunkHandle{base, new_size, new_size < chunk.length && chunk.pinned};
}

PrefaultResult OsBackend::do_prefault(AddressRange range) {
  auto start = Clock::now();
  if (range.empty()) {
    record(BackendOp::kPrefault, 0, std::chrono::nanoseconds{0}, 0);
    return {};
  }
  AddressRange span = page_span(range);
  {
    std::lock_guard lock(mu_);
    check_faultable(span);
  }
  PrefaultMode mode = PrefaultMode::kPinned;
  if (::mlock(reinterpret_cast<void*>(span.begin), span.length) == 0) {
    std::lock_guard lock(mu_);
    pinned_.insert(span.begin, span.end());
  } else {
    mode = PrefaultMode::kTouched;
    touch_pages(span.begin, span.length, page_size_);
  }
  auto elapsed = since(start);
  record(BackendOp::kPrefault, span.length, elapsed, 0);
  return {elapsed, mode};
}

std::chrono::nanoseconds OsBackend::do_touch(AddressRange range) {
  auto start = Clock::now();
  if (range.empty()) {
    record(BackendOp::kTouch, 0, std::chrono::nanoseconds{0}, 0);
    return std::chrono::nanoseconds{0};
  }
  AddressRange span = page_span(range);
  {
    std::lock_guard lock(mu_);
    check_faultable(span);
  }
  touch_pages(span.begin, span.length, page_size_);
  auto elapsed = since(start);
  record(BackendOp::kTouch, span.length, elapsed, 0);
  return elapsed;
}

void OsBackend::do_unpin(AddressRange range) {
  auto start = Clock::now();
  if (range.empty()) return;
  AddressRange span = page_span(range);
  std::lock_guard lock(mu_);
  if (!pinned_.covers(span.begin, span.end())) throw ContractViolation("unpin: page was never pinned");
  ::munlock(reinterpret_cast<void*>(span.begin), span.length);
  pinned_.erase(span.begin, span.end());
  record(BackendOp::kUnpin, span.length, since(start), 0);
}

BackendStats OsBackend::do_memory_stats() {
  auto start = Clock::now();
  std::string meminfo = slurp("/proc/meminfo");
  if (meminfo.empty()) throw StatsUnavailable("cannot read /proc/meminfo");
  BackendStats s = parse_proc_stats(meminfo, slurp("/proc/zoneinfo"), page_size_);
  {
    std::lock_guard lock(mu_);
    s.pinned = pinned_.bytes();
  }
  record(BackendOp::kStats, 0, since(start), s.available);
  return s;
}

AdviseResult OsBackend::do_advise_release_file_cache(const std::string& file, std::size_t length) {
  auto start = Clock::now();
  auto cached = file_cached_bytes(file);
  if (!cached) {
    record(BackendOp::kAdvise, 0, since(start), 0);
    return AdviseResult::kUnknownFile;
  }
  if (*cached == 0) {
    record(BackendOp::kAdvise, 0, since(start), 0);
    return AdviseResult::kNotCached;
  }
  Fd fd(::open(file.c_str(), O_RDONLY | O_CLOEXEC));
  if (fd.get() < 0) {
    record(BackendOp::kAdvise, 0, since(start), 0);
    return AdviseResult::kUnknownFile;
  }
  ::posix_fadvise(fd.get(), 0, static_cast<off_t>(length), POSIX_FADV_DONTNEED);
  record(BackendOp::kAdvise, *cached, since(start), 0);
  return AdviseResult::kReleased;
}

}  // namespace fastalloc::backend
