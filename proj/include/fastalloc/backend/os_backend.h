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
// Linux implementation of Backend.
//
// A region is a PROT_NONE reservation committed by mprotect; chunks are
// private anonymous mappings resized with mremap. Prefault pins with mlock and
// falls back to touching each page when the lock limit refuses it.

#pragma once

#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "fastalloc/backend/backend.h"
#include "fastalloc/common/interval_set.h"

namespace fastalloc::backend {

// Bytes of `path` currently in the page cache (mincore over a read-only
// mapping). nullopt when the file cannot be opened or mapped.
std::optional<std::size_t> file_cached_bytes(const std::string& path);

// Parses /proc/meminfo and /proc/zoneinfo formatted text. Throws
// StatsUnavailable when a required field is missing.
BackendStats parse_proc_stats(const std::string& meminfo, const std::string& zoneinfo,
                              std::size_t page_size);

class OsBackend final : public Backend {
 public:
  OsBackend();
  ~OsBackend() override;

  std::size_t page_size() const override { return page_size_; }
  bool simulated() const override { return false; }

  // Bytes this backend currently holds pinned.
  std::size_t pinned_bytes() const;

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
  AddressRange page_span(AddressRange range) const;
  void check_faultable(AddressRange range) const;
  void drop_pins(std::uintptr_t begin, std::uintptr_t end);

  const std::size_t page_size_;
  mutable std::mutex mu_;
  std::map<std::uintptr_t, Region> regions_;
  std::map<std::uintptr_t, std::size_t> chunks_;
  IntervalSet pinned_;
};

}  // namespace fastalloc::backend
