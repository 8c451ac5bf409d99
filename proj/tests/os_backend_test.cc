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

#include <unistd.h>

#include <cstdio>
#include <cstring>
#include <fstream>

#include "fastalloc/common/units.h"
#include "gtest/gtest.h"

namespace fastalloc::backend {
namespace {

TEST(ProcStatsTest, ParsesMeminfoAndZoneinfo) {
  const std::string meminfo =
      "MemTotal:       16384000 kB\n"
      "MemFree:         1000000 kB\n"
      "MemAvailable:    8192000 kB\n"
      "Cached:          4096000 kB\n"
      "AnonPages:       2048000 kB\n"
      "SwapTotal:       1000 kB\n"
      "SwapFree:        400 kB\n";
  const std::string zoneinfo =
      "Node 0, zone   Normal\n"
      "  pages free     12345\n"
      "        min      1000\n"
      "        low      1250\n"
      "        high     1500\n"
      "Node 0, zone    DMA32\n"
      "        min      24\n"
      "        low      30\n";
  auto s = parse_proc_stats(meminfo, zoneinfo, 4096);
  EXPECT_EQ(s.total, std::size_t{16384000} * 1024);
  EXPECT_EQ(s.available, std::size_t{8192000} * 1024);
  EXPECT_EQ(s.free, std::size_t{1000000} * 1024);
  EXPECT_EQ(s.file_cache, std::size_t{4096000} * 1024);
  EXPECT_EQ(s.resident_anon, std::size_t{2048000} * 1024);
  EXPECT_EQ(s.swapped, std::size_t{600} * 1024);
  EXPECT_EQ(s.watermark_min, 1024u * 4096);
  EXPECT_EQ(s.watermark_low, 1280u * 4096);
}

TEST(ProcStatsTest, MissingFieldIsUnavailable) {
  EXPECT_THROW(parse_proc_stats("MemTotal: 10 kB\n", "", 4096), StatsUnavailable);
}

TEST(ProcStatsTest, HiddenZoneinfoFallsBackToRatio) {
  auto s = parse_proc_stats("MemTotal: 1000000 kB\nMemAvailable: 10 kB\nCached: 0 kB\n", "", 4096);
  EXPECT_EQ(s.watermark_min, 1000000u * 1024 / 1000);
  EXPECT_LT(s.watermark_min, s.watermark_low);
}

TEST(OsBackendTest, RegionGrowWriteShrink) {
  OsBackend b;
  const std::size_t page = b.page_size();
  Region r = b.create_region(64 * kMiB);
  auto g = b.grow_region(r, 0);
  ASSERT_TRUE(g);
  EXPECT_TRUE(g->empty());
  g = b.grow_region(r, 4 * page);
  ASSERT_TRUE(g);
  EXPECT_EQ(g->begin, r.base);
  std::memset(g->data(), 0xab, g->length);
  b.prefault(*g);
  b.shrink_region(r, 2 * page);
  EXPECT_EQ(r.committed(), 2 * page);
  EXPECT_EQ(static_cast<unsigned char>(g->data()[page]), 0xab);
  EXPECT_THROW(b.shrink_region(r, 8 * page), ContractViolation);
  EXPECT_FALSE(b.grow_region(r, 128 * kMiB).has_value());
  b.release_region(r);
  EXPECT_EQ(b.pinned_bytes(), 0u);
}

TEST(OsBackendTest, ChunkResizePreservesPrefix) {
  OsBackend b;
  auto c = b.map_chunk(128 * kKiB);
  ASSERT_TRUE(c);
  for (std::size_t i = 0; i < c->length; ++i) c->data()[i] = static_cast<std::byte>(i % 251);
  auto r = b.resize_chunk(*c, 256 * kKiB);
  ASSERT_TRUE(r);
  for (std::size_t i = 0; i < 128 * kKiB; ++i) ASSERT_EQ(r->data()[i], static_cast<std::byte>(i % 251));
  auto s = b.resize_chunk(*r, 64 * kKiB);
  ASSERT_TRUE(s);
  EXPECT_EQ(s->length, 64 * kKiB);
  b.unmap_chunk(*s);
  EXPECT_THROW(b.unmap_chunk(*s), ContractViolation);
}

TEST(OsBackendTest, PrefaultPinsOrDegradesToTouch) {
  OsBackend b;
  auto c = b.map_chunk(64 * kKiB);
  auto res = b.prefault(c->range());
  if (res.mode == PrefaultMode::kPinned) {
    EXPECT_EQ(b.pinned_bytes(), 64 * kKiB);
    b.unpin(c->range());
    EXPECT_EQ(b.pinned_bytes(), 0u);
  } else {
    EXPECT_EQ(b.pinned_bytes(), 0u);
  }
  EXPECT_THROW(b.unpin(c->range()), ContractViolation);
  EXPECT_THROW(b.prefault(AddressRange{c->base + 64 * kKiB, 4096}), ContractViolation);
  b.unmap_chunk(*c);
}

TEST(OsBackendTest, MemoryStatsAreSane) {
  OsBackend b;
  BackendStats s;
  try {
    s = b.memory_stats();
  } catch (const StatsUnavailable&) {
    GTEST_SKIP() << "no /proc/meminfo";
  }
  EXPECT_GT(s.total, 0u);
  EXPECT_LE(s.available, s.total);
  EXPECT_LE(s.free, s.available);
  EXPECT_LT(s.watermark_min, s.watermark_low);
}

TEST(OsBackendTest, AdviseOnFiles) {
  OsBackend b;
  EXPECT_EQ(b.advise_release_file_cache("/nonexistent/fastalloc-file", 0), AdviseResult::kUnknownFile);
  char path[] = "/tmp/fastalloc-adviseXXXXXX";
  int fd = ::mkstemp(path);
  ASSERT_GE(fd, 0);
  std::string data(1 << 20, 'x');
  ASSERT_EQ(::write(fd, data.data(), data.size()), static_cast<ssize_t>(data.size()));
  ::fsync(fd);
  ::close(fd);
  auto cached = file_cached_bytes(path);
  ASSERT_TRUE(cached);
  if (*cached > 0) {
    EXPECT_EQ(b.advise_release_file_cache(path, 0), AdviseResult::kReleased);
  }
  std::remove(path);
}

}  // namespace
}  // namespace fastalloc::backend
