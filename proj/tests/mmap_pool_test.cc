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

#include <random>

#include "fastalloc/alloc/size_class.h"
#include "fastalloc/backend/sim_backend.h"
#include "fastalloc/common/units.h"
#include "gtest/gtest.h"

namespace fastalloc::alloc {
namespace {

using backend::ChunkHandle;
using backend::SimBackend;
using backend::SimConfig;

SimConfig sim_config() {
  SimConfig c;
  c.fault_cost = std::chrono::microseconds(1);
  c.capacity = kGiB;
  c.address_space = 4 * kGiB;
  return c;
}

std::size_t count_actions(const RoundReport& r, std::string_view action) {
  std::size_t n = 0;
  for (const auto& a : r.actions) n += a.action == action;
  return n;
}

TEST(MmapPoolTest, FallsBackToLargestChunk) {
  SimBackend b(sim_config());
  MmapPool pool(128 * kKiB, 8);
  auto c = b.map_chunk(256 * kKiB);
  pool.insert(*c);
  EXPECT_EQ(pool.bucket_counts()[2], 1u);
  bool contended = true;
  // best_fit_index(256 KB) = 3 is empty; the largest chunk still fits.
  auto got = pool.try_take(256 * kKiB, &contended);
  EXPECT_FALSE(contended);
  ASSERT_TRUE(got);
  EXPECT_EQ(got->base, c->base);
  EXPECT_EQ(pool.total_size(), 0u);
}

TEST(MmapPoolTest, PrefersBestFitBucket) {
  MmapPool pool(128 * kKiB, 8);
  pool.insert(ChunkHandle{0x100000, 200 * kKiB, true});
  pool.insert(ChunkHandle{0x200000, 400 * kKiB, true});
  pool.insert(ChunkHandle{0x300000, 1200 * kKiB, true});
  // best_fit_index(200 KB) = 2 is empty, so the largest chunk is taken.
  auto got = pool.try_take(200 * kKiB, nullptr);
  ASSERT_TRUE(got);
  EXPECT_EQ(got->length, 1200 * kKiB);
  got = pool.try_take(300 * kKiB, nullptr);
  ASSERT_TRUE(got);
  EXPECT_EQ(got->length, 400 * kKiB);  // best_fit_index(300 KB) = 3
  EXPECT_EQ(pool.total_size(), 200 * kKiB);
}

TEST(MmapPoolTest, SaturatedBucketIsScannedForFit) {
  MmapPool pool(128 * kKiB, 8);
  pool.insert(ChunkHandle{0x100000, 1100 * kKiB, true});
  pool.insert(ChunkHandle{0x200000, 3 * kMiB, true});
  pool.insert(ChunkHandle{0x600000, 1200 * kKiB, true});
  auto got = pool.try_take(2 * kMiB, nullptr);
  ASSERT_TRUE(got);
  EXPECT_EQ(got->length, 3 * kMiB);
  got = pool.try_take(1150 * kKiB, nullptr);
  ASSERT_TRUE(got);
  EXPECT_EQ(got->length, 1200 * kKiB);
  // Nothing fits: the largest (smaller) chunk comes back for resizing.
  got = pool.try_take(2 * kMiB, nullptr);
  ASSERT_TRUE(got);
  EXPECT_EQ(got->length, 1100 * kKiB);
}

TEST(MmapPoolTest, InsertWithinRespectsLimit) {
  MmapPool pool(128 * kKiB, 8);
  EXPECT_TRUE(pool.insert_within(ChunkHandle{0x100000, 256 * kKiB, false}, 512 * kKiB));
  EXPECT_TRUE(pool.insert_within(ChunkHandle{0x200000, 256 * kKiB, false}, 512 * kKiB));
  EXPECT_FALSE(pool.insert_within(ChunkHandle{0x300000, 128 * kKiB, false}, 512 * kKiB));
  EXPECT_EQ(pool.total_size(), 512 * kKiB);
}

TEST(MmapPoolTest, BucketSoundnessUnderRandomInserts) {
  MmapPool pool(128 * kKiB, 8);
  std::mt19937 rng(9);
  std::uintptr_t addr = 0x10000000;
  for (int i = 0; i < 2000; ++i) {
    std::size_t len = round_up(128 * kKiB + rng() % (4 * kMiB), 4096);
    pool.insert(ChunkHandle{addr, len, true});
    addr += len;
    if (rng() % 3 == 0) pool.take_smallest();
    if (rng() % 3 == 0) pool.try_take(128 * kKiB + rng() % (2 * kMiB), nullptr);
    ASSERT_TRUE(pool.check_invariants());
  }
}

TEST(LargeChunkTableTest, FreeDuringShrinkIsDeferred) {
  LargeChunkTable table;
  ChunkHandle c{0x100000, 524 * kKiB, false};
  table.add(c, 280 * kKiB);
  EXPECT_EQ(table.pending_shrinks(), 1u);
  auto shrinks = table.begin_shrinks();
  ASSERT_EQ(shrinks.size(), 1u);
  EXPECT_FALSE(table.release(c.base).has_value());
  EXPECT_THROW(table.release(c.base), backend::ContractViolation);
  auto freed = table.finish_shrink(c.base, ChunkHandle{c.base, 280 * kKiB, false});
  ASSERT_TRUE(freed);
  EXPECT_EQ(freed->length, 280 * kKiB);
  EXPECT_EQ(table.size(), 0u);
}

TEST(MmapRoundTest, DelayedShrinkResizesToRequest) {
  SimBackend b(sim_config());
  MmapPool pool(128 * kKiB, 8);
  LargeChunkTable table;
  auto c = b.map_chunk(524 * kKiB);
  b.prefault(c->range());
  b.unpin(c->range());
  table.add(*c, round_up(278 * kKiB, 4096));
  const auto before = b.memory_stats().available;
  RoundReport r;
  // Thresholds chosen so no reservation or trimming happens.
  mmap_round(pool, table, b, Thresholds{0, 0, 0, 128 * kKiB}, true, r);
  EXPECT_EQ(count_actions(r, "resize"), 1u);
  EXPECT_EQ(table.pending_shrinks(), 0u);
  EXPECT_EQ(table.usable_size(c->base), 280 * kKiB);
  EXPECT_EQ(b.memory_stats().available - before, 244 * kKiB);
}

TEST(MmapRoundTest, ReservationFillsBucketFromEmpty) {
  SimBackend b(sim_config());
  MmapPool pool(128 * kKiB, 8);
  LargeChunkTable table;
  RoundReport r;
  mmap_round(pool, table, b, Thresholds{kMiB, 2 * kMiB, 4 * kMiB, 256 * kKiB}, true, r);
  EXPECT_EQ(count_actions(r, "map"), 8u);
  EXPECT_EQ(count_actions(r, "prefault"), 8u);
  EXPECT_EQ(pool.bucket_counts()[2], 8u);
  EXPECT_EQ(pool.total_size(), 2 * kMiB);
  EXPECT_EQ(pool.pinned_bytes(), 2 * kMiB);
  EXPECT_EQ(b.memory_stats().pinned, 2 * kMiB);
}

TEST(MmapRoundTest, TrimReleasesSmallestChunks) {
  SimBackend b(sim_config());
  MmapPool pool(128 * kKiB, 8);
  LargeChunkTable table;
  for (int i = 0; i < 20; ++i) pool.insert(*b.map_chunk(256 * kKiB));
  ASSERT_EQ(pool.total_size(), 5 * kMiB);
  RoundReport r;
  mmap_round(pool, table, b, Thresholds{kMiB, 2 * kMiB, 4 * kMiB, 256 * kKiB}, true, r);
  EXPECT_EQ(count_actions(r, "unmap"), 4u);
  EXPECT_EQ(pool.total_size(), 4 * kMiB);
}

TEST(MmapRoundTest, TrimTakesSmallestFirst) {
  SimBackend b(sim_config());
  MmapPool pool(128 * kKiB, 8);
  LargeChunkTable table;
  pool.insert(*b.map_chunk(kMiB));
  pool.insert(*b.map_chunk(128 * kKiB));
  pool.insert(*b.map_chunk(512 * kKiB));
  RoundReport r;
  mmap_round(pool, table, b, Thresholds{0, kMiB, kMiB, 128 * kKiB}, true, r);
  ASSERT_EQ(count_actions(r, "unmap"), 2u);
  EXPECT_EQ(pool.total_size(), kMiB);
  EXPECT_EQ(pool.bucket_counts()[8], 1u);
}

}  // namespace
}  // namespace fastalloc::alloc
