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

#include <atomic>
#include <cstring>
#include <thread>

#include "fastalloc/backend/os_backend.h"
#include "fastalloc/backend/sim_backend.h"
#include "fastalloc/common/units.h"
#include "gtest/gtest.h"

namespace fastalloc::alloc {
namespace {

using backend::SimBackend;
using backend::SimConfig;

constexpr std::size_t kPage = 4096;

SimConfig sim_config() {
  SimConfig c;
  c.fault_cost = std::chrono::microseconds(1);
  c.capacity = 2 * kGiB;
  c.address_space = 8 * kGiB;
  return c;
}

// Leaves the arena with exactly `top` bytes of unpinned top chunk.
void shape_top(HeapArena& arena, std::size_t top) {
  if (top < HeapArena::kTopPad) {
    void* first = arena.allocate(top + kKiB);
    ASSERT_NE(first, nullptr);
    const std::size_t rest = arena.top_free();
    ASSERT_GT(rest, top);
    ASSERT_NE(arena.allocate(rest - top), nullptr);
  } else {
    // Growth leaves exactly the pad behind a page-sized request; freeing
    // that request folds it back into the top chunk.
    ASSERT_EQ(top % kPage, 0u);
    if (arena.top_free() > 0) {
      ASSERT_NE(arena.allocate(arena.top_free()), nullptr);
    }
    void* last = arena.allocate(top - HeapArena::kTopPad);
    ASSERT_NE(last, nullptr);
    ASSERT_EQ(arena.top_free(), HeapArena::kTopPad);
    arena.deallocate(last);
  }
  ASSERT_EQ(arena.top_free(), top);
}

std::size_t count_actions(const RoundReport& r, std::string_view action) {
  std::size_t n = 0;
  for (const auto& a : r.actions) n += a.action == action;
  return n;
}

TEST(HeapArenaTest, ServesFromTopWithoutBackendCalls) {
  SimBackend b(sim_config());
  HeapArena arena(b, kGiB);
  arena.set_managed(true);
  RoundReport r;
  heap_round(arena, Thresholds{kMiB, 2 * kMiB, 4 * kMiB, kPage}, r);
  ASSERT_GE(arena.top_free(), kKiB);
  const auto ops = b.op_count();
  HeapArena::Source source;
  void* p = arena.allocate(kKiB, &source);
  ASSERT_NE(p, nullptr);
  EXPECT_EQ(source, HeapArena::Source::kTop);
  EXPECT_EQ(b.op_count(), ops);
  EXPECT_EQ(reinterpret_cast<std::uintptr_t>(p) % 16, 0u);
}

TEST(HeapArenaTest, FreedBlockIsReused) {
  SimBackend b(sim_config());
  HeapArena arena(b, kGiB);
  void* p = arena.allocate(kKiB);
  arena.deallocate(p);
  EXPECT_EQ(arena.allocate(kKiB), p);
  EXPECT_TRUE(arena.check_invariants());
}

TEST(HeapArenaTest, FirstFitSplitsAndCoalesces) {
  SimBackend b(sim_config());
  HeapArena arena(b, kGiB);
  void* a = arena.allocate(100);
  void* c = arena.allocate(200);
  void* d = arena.allocate(300);
  void* guard = arena.allocate(16);
  EXPECT_EQ(arena.block_size(a), 112u);
  arena.deallocate(a);
  arena.deallocate(d);
  EXPECT_EQ(arena.free_list_bytes(), 112u + 304u);
  // First fit takes the lower hole and splits it.
  void* small = arena.allocate(48);
  EXPECT_EQ(small, a);
  EXPECT_EQ(arena.free_list_bytes(), 112u + 304u - 48u);
  arena.deallocate(small);
  arena.deallocate(c);
  // a, c and d merged into one hole.
  EXPECT_EQ(arena.free_list_bytes(), 112u + 208u + 304u);
  EXPECT_TRUE(arena.check_invariants());
  arena.deallocate(guard);
  EXPECT_TRUE(arena.empty());
}

TEST(HeapArenaTest, DoubleAndForeignFreeAreRejected) {
  SimBackend b(sim_config());
  HeapArena arena(b, kGiB);
  void* p = arena.allocate(64);
  arena.deallocate(p);
  EXPECT_THROW(arena.deallocate(p), backend::ContractViolation);
  void* q = arena.allocate(64);
  EXPECT_THROW(arena.deallocate(static_cast<char*>(q) + 16), backend::ContractViolation);
  EXPECT_THROW(arena.allocate(0), backend::ContractViolation);
}

TEST(HeapArenaTest, DefaultGrowthWhenTopIsShort) {
  SimBackend b(sim_config());
  HeapArena arena(b, kGiB);
  HeapArena::Source source;
  ASSERT_NE(arena.allocate(kKiB, &source), nullptr);
  EXPECT_EQ(source, HeapArena::Source::kGrowth);
  EXPECT_EQ(arena.committed(), round_up(kKiB + HeapArena::kTopPad, kPage));
}

TEST(HeapArenaTest, UnmanagedFreeTrimsLikeDefaultHeap) {
  SimBackend b(sim_config());
  HeapArena arena(b, kGiB);
  void* p = arena.allocate(4 * kMiB);
  arena.deallocate(p);
  EXPECT_LE(arena.top_free(), HeapArena::kTrimThreshold);
}

TEST(HeapArenaTest, RegionExhaustionReturnsNull) {
  SimBackend b(sim_config());
  HeapArena arena(b, kMiB);
  EXPECT_NE(arena.allocate(512 * kKiB), nullptr);
  EXPECT_EQ(arena.allocate(768 * kKiB), nullptr);
}

TEST(HeapRoundTest, GradualReservationUsesExactChunks) {
  SimBackend b(sim_config());
  HeapArena arena(b, kGiB);
  arena.set_managed(true);
  shape_top(arena, 2 * kKiB);
  RoundReport r;
  const Thresholds t{10 * kMiB, 20 * kMiB, 40 * kMiB, 4 * kKiB};
  heap_round(arena, t, r);
  const std::size_t expected = (20 * kMiB - 2 * kKiB + 4 * kKiB - 1) / (4 * kKiB);
  EXPECT_EQ(expected, 5120u);
  EXPECT_EQ(count_actions(r, "grow"), expected);
  EXPECT_EQ(count_actions(r, "prefault"), expected);
  for (const auto& a : r.actions) EXPECT_EQ(a.bytes, 4 * kKiB);
  EXPECT_TRUE(r.heap_reservation_ran);
  EXPECT_FALSE(r.heap_partial);
  EXPECT_GE(arena.top_free(), t.rsv_thr);
  EXPECT_LE(arena.top_free(), t.trim_thr + t.mem_chunk);
  // Grow and prefault alternate.
  for (std::size_t i = 0; i < r.actions.size(); ++i) {
    EXPECT_EQ(r.actions[i].action, i % 2 == 0 ? "grow" : "prefault");
  }
}

TEST(HeapRoundTest, DeadBandMakesNoBackendCalls) {
  SimBackend b(sim_config());
  HeapArena arena(b, kGiB);
  arena.set_managed(true);
  shape_top(arena, 15 * kMiB);
  // The shaped top was never pinned; prefault it so only the band logic runs.
  RoundReport warm;
  while (arena.prefault_top_gap(kMiB, warm)) {
  }
  const auto ops = b.op_count();
  RoundReport r;
  heap_round(arena, Thresholds{10 * kMiB, 20 * kMiB, 40 * kMiB, kPage}, r);
  EXPECT_EQ(r.backend_calls(), 0u);
  EXPECT_EQ(b.op_count(), ops + 0);
}

TEST(HeapRoundTest, TrimShrinksOnceToTrimThreshold) {
  SimBackend b(sim_config());
  HeapArena arena(b, kGiB);
  arena.set_managed(true);
  RoundReport fill;
  heap_round(arena, Thresholds{50 * kMiB, 50 * kMiB, 100 * kMiB, 50 * kMiB}, fill);
  ASSERT_EQ(arena.top_free(), 50 * kMiB);
  RoundReport r;
  heap_round(arena, Thresholds{10 * kMiB, 20 * kMiB, 40 * kMiB, kPage}, r);
  ASSERT_EQ(r.actions.size(), 1u);
  EXPECT_EQ(r.actions[0].action, "shrink");
  EXPECT_EQ(r.actions[0].bytes, 10 * kMiB);
  EXPECT_EQ(arena.top_free(), 40 * kMiB);
}

TEST(HeapRoundTest, HandedOutPagesAreUnpinnedNextRound) {
  SimBackend b(sim_config());
  HeapArena arena(b, kGiB);
  arena.set_managed(true);
  const Thresholds t{2 * kMiB, 4 * kMiB, 8 * kMiB, 64 * kKiB};
  RoundReport r1;
  heap_round(arena, t, r1);
  EXPECT_EQ(b.memory_stats().pinned, arena.pinned_bytes());
  for (int i = 0; i < 1000; ++i) ASSERT_NE(arena.allocate(kKiB), nullptr);
  RoundReport r2;
  heap_round(arena, t, r2);
  EXPECT_EQ(count_actions(r2, "unpin"), 1u);
  // Only top-chunk pages (and the page holding the allocation end) stay pinned.
  EXPECT_LE(arena.pinned_bytes(), arena.top_free() + kPage);
  EXPECT_EQ(b.memory_stats().pinned, arena.pinned_bytes());
}

TEST(HeapRoundTest, GrowthFailureReportsPartial) {
  SimBackend b(sim_config());
  HeapArena arena(b, 64 * kKiB);
  arena.set_managed(true);
  RoundReport r;
  heap_round(arena, Thresholds{kMiB, 2 * kMiB, 4 * kMiB, kPage}, r);
  EXPECT_TRUE(r.heap_partial);
  EXPECT_EQ(r.heap_reserved, 64 * kKiB);
}

TEST(HeapRoundTest, LockIsReleasedBetweenGrowths) {
  backend::OsBackend b;
  const std::size_t page = b.page_size();
  if (page != kPage) GTEST_SKIP() << "needs 4 KB pages";
  HeapArena arena(b, kGiB);
  arena.set_managed(true);
  shape_top(arena, 2 * kKiB);
  arena.reset_max_wait_ops();
  arena.set_acquire_trace(true);

  std::atomic<bool> done{false};
  std::atomic<std::uint64_t> round_start{0}, round_end{0};
  RoundReport r;
  std::thread round([&] {
    round_start = b.op_count();
    heap_round(arena, Thresholds{10 * kMiB, 20 * kMiB, 40 * kMiB, 4 * kKiB}, r);
    round_end = b.op_count();
    done = true;
  });
  std::size_t competitor_allocs = 0;
  while (!done) {
    if (arena.allocate(16) != nullptr) ++competitor_allocs;
    std::this_thread::yield();
  }
  round.join();

  EXPECT_EQ(count_actions(r, "grow"), 5120u);
  for (const auto& a : r.actions) {
    if (a.action == "grow") {
      ASSERT_EQ(a.bytes, 4 * kKiB);
    }
  }
  EXPECT_LE(arena.max_wait_ops(), 2u);
  std::size_t inside = 0;
  for (auto c : arena.acquire_trace()) inside += c > round_start && c < round_end;
  EXPECT_GT(inside, 0u) << competitor_allocs << " competitor allocations";
}

}  // namespace
}  // namespace fastalloc::alloc
