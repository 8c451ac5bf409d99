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
#include "fastalloc/alloc/allocator.h"

#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <thread>

#include "fastalloc/backend/sim_backend.h"
#include "fastalloc/common/units.h"
#include "support/soundness.h"

namespace fastalloc::alloc {
namespace {

using backend::ContractViolation;
using backend::SimBackend;
using backend::SimConfig;

class SwitchProbe final : public RegistryProbe {
 public:
  explicit SwitchProbe(bool on) : on_(on) {}
  bool is_registered(pid_t) const override {
    calls_.fetch_add(1);
    return on_.load();
  }
  void set(bool on) { on_.store(on); }
  int calls() const { return calls_.load(); }

 private:
  std::atomic<bool> on_;
  mutable std::atomic<int> calls_{0};
};

SimConfig quiet_sim() {
  SimConfig cfg;
  cfg.capacity = 2 * kGiB;
  cfg.event_log = false;
  return cfg;
}

template <typename Pred>
bool wait_for(Pred pred, std::chrono::milliseconds limit = std::chrono::milliseconds(2000)) {
  const auto end = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < end) {
    if (pred()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  return pred();
}

TEST(AllocatorActivation, RegisteredStartsThreadAndReservesMinimum) {
  SimBackend sim(quiet_sim());
  StaticRegistryProbe probe(true);
  Allocator a(ReservationPolicy{}, sim, &probe, DriveMode::kThread);
  EXPECT_TRUE(a.thread_running());
  ASSERT_TRUE(wait_for([&] { return a.diagnostics().rounds >= 1; }));
  const auto d = a.diagnostics();
  EXPECT_TRUE(d.managed);
  EXPECT_GE(d.top_free, 5 * kMiB);
  EXPECT_GE(d.pool_total, 5 * kMiB - 128 * kKiB);
  EXPECT_LE(d.pool_total, 10 * kMiB);
}

TEST(AllocatorActivation, UnregisteredPassesThrough) {
  SimBackend sim(quiet_sim());
  StaticRegistryProbe probe(false);
  Allocator a(ReservationPolicy{}, sim, &probe, DriveMode::kThread);
  EXPECT_FALSE(a.thread_running());
  void* small = a.allocate(100);
  void* large = a.allocate(256 * kKiB);
  ASSERT_NE(small, nullptr);
  ASSERT_NE(large, nullptr);
  const auto d = a.diagnostics();
  EXPECT_FALSE(d.managed);
  EXPECT_EQ(d.rounds, 0u);
  EXPECT_EQ(d.pool_total, 0u);
  EXPECT_EQ(d.fallback_large, 1u);
  a.deallocate(large);
  a.deallocate(small);
  // Unmanaged large frees go straight back.
  EXPECT_EQ(a.diagnostics().pool_total, 0u);
  EXPECT_EQ(sim.live_chunk_count(), 0u);
}

TEST(AllocatorActivation, NullProbeNeverManages) {
  SimBackend sim(quiet_sim());
  Allocator a(ReservationPolicy{}, sim, nullptr, DriveMode::kManual);
  auto r = a.run_management_round();
  EXPECT_FALSE(r.managed);
  EXPECT_FALSE(a.managed());
}

TEST(AllocatorActivation, LateRegistrationIsPickedUpOnAllocation) {
  SimBackend sim(quiet_sim());
  SwitchProbe probe(false);
  ReservationPolicy policy;
  policy.probe_period = std::chrono::milliseconds(5);
  Allocator a(policy, sim, &probe, DriveMode::kThread);
  EXPECT_FALSE(a.thread_running());
  probe.set(true);
  std::vector<void*> blocks;
  ASSERT_TRUE(wait_for([&] {
    blocks.push_back(a.allocate(64));
    return a.thread_running();
  }));
  ASSERT_TRUE(wait_for([&] { return a.managed(); }));
  for (void* p : blocks) a.deallocate(p);
}

TEST(AllocatorActivation, ProbeIsRateLimited) {
  SimBackend sim(quiet_sim());
  SwitchProbe probe(false);
  ReservationPolicy policy;
  policy.probe_period = std::chrono::milliseconds(10'000);
  Allocator a(policy, sim, &probe, DriveMode::kThread);
  const int before = probe.calls();
  for (int i = 0; i < 1000; ++i) a.deallocate(a.allocate(32));
  EXPECT_EQ(probe.calls(), before);
}

TEST(AllocatorActivation, UnregisterTearsDownOnNextRound) {
  SimBackend sim(quiet_sim());
  SwitchProbe probe(true);
  Allocator a(ReservationPolicy{}, sim, &probe, DriveMode::kManual);
  auto first = a.run_management_round();
  ASSERT_TRUE(first.managed);
  ASSERT_GT(a.pool().total_size(), 0u);
  ASSERT_GT(a.arena().top_free(), 0u);
  probe.set(false);
  auto r = a.run_management_round();
  EXPECT_FALSE(r.managed);
  EXPECT_FALSE(a.managed());
  EXPECT_EQ(a.pool().total_size(), 0u);
  EXPECT_EQ(a.arena().top_free(), 0u);
  EXPECT_EQ(sim.live_chunk_count(), 0u);
  EXPECT_EQ(sim.memory_stats().pinned, 0u);
}

TEST(AllocatorActivation, ThreadExitsAfterUnregister) {
  SimBackend sim(quiet_sim());
  SwitchProbe probe(true);
  ReservationPolicy policy;
  policy.interval = std::chrono::microseconds(500);
  Allocator a(policy, sim, &probe, DriveMode::kThread);
  ASSERT_TRUE(wait_for([&] { return a.managed(); }));
  probe.set(false);
  ASSERT_TRUE(wait_for([&] { return !a.thread_running(); }));
  EXPECT_FALSE(a.managed());
  EXPECT_EQ(a.pool().total_size(), 0u);
}

class ManagedAllocator : public ::testing::Test {
 protected:
  ManagedAllocator() : sim_(quiet_sim()), probe_(true), a_(ReservationPolicy{}, sim_, &probe_, DriveMode::kManual) {
    a_.run_management_round();
  }
  SimBackend sim_;
  StaticRegistryProbe probe_;
  Allocator a_;
};

TEST_F(ManagedAllocator, SmallFastPathMakesNoBackendCalls) {
  const auto before = sim_.op_count();
  std::vector<void*> blocks;
  for (int i = 0; i < 1000; ++i) blocks.push_back(a_.allocate(16 + (i % 100) * 40));
  for (void* p : blocks) a_.deallocate(p);
  EXPECT_EQ(sim_.op_count(), before);
  EXPECT_EQ(a_.diagnostics().fallback_small, 0u);
}

TEST_F(ManagedAllocator, LargeFastPathNeverMaps) {
  for (std::size_t size : {128 * kKiB, 200 * kKiB, 256 * kKiB, 700 * kKiB, kMiB}) {
    a_.run_management_round();
    const auto maps_before = a_.diagnostics().fallback_large;
    const auto before = sim_.op_count();
    void* p = a_.allocate(size);
    ASSERT_NE(p, nullptr);
    const auto calls = sim_.op_count() - before;
    // At most one resize when the pool only holds smaller chunks.
    EXPECT_LE(calls, 1u) << size;
    EXPECT_EQ(a_.diagnostics().fallback_large, maps_before) << size;
    EXPECT_GE(a_.usable_size(p), size);
    a_.deallocate(p);
  }
}

TEST(AllocatorLarge, PooledChunkServesTheRequest) {
  SimBackend sim(quiet_sim());
  StaticRegistryProbe probe(true);
  ReservationPolicy policy;
  policy.min_rsv = 256 * kKiB;
  policy.mem_chunk = 256 * kKiB;
  policy.tgt_mem = 256 * kKiB;
  policy.rsv_thr = 128 * kKiB;
  policy.trim_thr = 512 * kKiB;
  Allocator a(policy, sim, &probe, DriveMode::kManual);
  a.run_management_round();
  ASSERT_EQ(a.pool().total_size(), 256 * kKiB);
  const auto chunks = sim.live_chunk_count();
  void* p = a.allocate(256 * kKiB);
  ASSERT_NE(p, nullptr);
  EXPECT_EQ(a.pool().total_size(), 0u);
  EXPECT_EQ(sim.live_chunk_count(), chunks);
  EXPECT_EQ(a.diagnostics().fast_large, 1u);
  // Pool is empty now: the next request maps a fresh chunk.
  void* q = a.allocate(200 * kKiB);
  ASSERT_NE(q, nullptr);
  EXPECT_EQ(sim.live_chunk_count(), chunks + 1);
  EXPECT_EQ(a.diagnostics().fallback_large, 1u);
  a.deallocate(p);
  a.deallocate(q);
}

TEST(AllocatorLarge, FreeRecyclesUpToTrimThreshold) {
  SimBackend sim(quiet_sim());
  StaticRegistryProbe probe(true);
  ReservationPolicy policy;
  policy.min_rsv = 256 * kKiB;
  policy.tgt_mem = 512 * kKiB;
  policy.rsv_thr = 256 * kKiB;
  policy.trim_thr = kMiB;
  policy.mem_chunk = 256 * kKiB;
  Allocator a(policy, sim, &probe, DriveMode::kManual);
  a.run_management_round();
  const auto pooled = a.pool().total_size();
  ASSERT_EQ(pooled, 512 * kKiB);
  std::vector<void*> blocks;
  for (int i = 0; i < 6; ++i) blocks.push_back(a.allocate(256 * kKiB));
  EXPECT_EQ(a.pool().total_size(), 0u);
  for (void* p : blocks) a.deallocate(p);
  // Four chunks fit under trim_thr, the remaining two are unmapped.
  EXPECT_EQ(a.pool().total_size(), kMiB);
  EXPECT_EQ(a.large_table().size(), 0u);
  EXPECT_EQ(sim.live_chunk_count(), 4u);
  EXPECT_TRUE(a.pool().check_invariants());
}

TEST(AllocatorLarge, RecycleDisabledUnmapsEverything) {
  SimBackend sim(quiet_sim());
  StaticRegistryProbe probe(true);
  ReservationPolicy policy;
  policy.recycle_large = false;
  Allocator a(policy, sim, &probe, DriveMode::kManual);
  a.run_management_round();
  void* p = a.allocate(20 * kMiB);
  ASSERT_NE(p, nullptr);
  const auto pooled = a.pool().total_size();
  const auto chunks = sim.live_chunk_count();
  a.deallocate(p);
  EXPECT_EQ(a.pool().total_size(), pooled);
  EXPECT_EQ(sim.live_chunk_count(), chunks - 1);
}

TEST(AllocatorContract, ZeroSizeThrows) {
  SimBackend sim(quiet_sim());
  Allocator a(ReservationPolicy{}, sim, nullptr, DriveMode::kManual);
  EXPECT_THROW(a.allocate(0), ContractViolation);
}

TEST(AllocatorContract, DoubleAndForeignFreesThrow) {
  SimBackend sim(quiet_sim());
  StaticRegistryProbe probe(true);
  Allocator a(ReservationPolicy{}, sim, &probe, DriveMode::kManual);
  a.run_management_round();
  void* small = a.allocate(64);
  void* large = a.allocate(300 * kKiB);
  a.deallocate(small);
  a.deallocate(large);
  EXPECT_THROW(a.deallocate(small), ContractViolation);
  EXPECT_THROW(a.deallocate(large), ContractViolation);
  int local = 0;
  EXPECT_THROW(a.deallocate(&local), ContractViolation);
  EXPECT_NO_THROW(a.deallocate(nullptr));
}

TEST(AllocatorContract, BlocksAreAligned) {
  SimBackend sim(quiet_sim());
  StaticRegistryProbe probe(true);
  Allocator a(ReservationPolicy{}, sim, &probe, DriveMode::kManual);
  a.run_management_round();
  std::vector<void*> blocks;
  for (std::size_t s : {1, 3, 17, 100, 4095, 4097, 130'000, 131'072, 500'000}) {
    void* p = a.allocate(s);
    ASSERT_NE(p, nullptr);
    EXPECT_EQ(reinterpret_cast<std::uintptr_t>(p) % Allocator::kAlignment, 0u) << s;
    EXPECT_GE(a.usable_size(p), s);
    blocks.push_back(p);
  }
  for (void* p : blocks) a.deallocate(p);
}

TEST(AllocatorSoundness, RandomizedMixedWorkload) {
  const auto r = testing::run_soundness(20261018, 100'000);
  EXPECT_EQ(r.overlaps, 0u) << r.first_problem;
  EXPECT_EQ(r.corruptions, 0u) << r.first_problem;
  EXPECT_EQ(r.null_returns, 0u) << r.first_problem;
  EXPECT_EQ(r.heap_band_violations, 0u) << r.first_problem;
  EXPECT_EQ(r.pool_band_violations, 0u) << r.first_problem;
  EXPECT_GT(r.heap_bands_checked, 100u);
  EXPECT_TRUE(r.arena_empty_after_free);
  EXPECT_EQ(r.large_live_after_free, 0u);
  EXPECT_TRUE(r.arena_invariants);
  EXPECT_TRUE(r.pool_invariants);
  EXPECT_TRUE(r.backend_restored()) << r.available_after_destroy << " of " << r.capacity;
}

TEST(AllocatorSoundness, SecondSeed) {
  const auto r = testing::run_soundness(7, 30'000);
  EXPECT_TRUE(r.clean()) << r.first_problem;
}

TEST(AllocatorConcurrency, ThreadedRoundsWithAllocatingWorkers) {
  SimBackend sim(quiet_sim());
  StaticRegistryProbe probe(true);
  ReservationPolicy policy;
  policy.interval = std::chrono::microseconds(300);
  Allocator a(policy, sim, &probe, DriveMode::kThread);
  std::atomic<int> bad{0};
  auto worker = [&](unsigned seed) {
    std::mt19937 rng(seed);
    std::vector<std::pair<unsigned char*, std::size_t>> mine;
    for (int i = 0; i < 4000; ++i) {
      if (mine.empty() || rng() % 2 == 0) {
        std::size_t size = rng() % 4 == 0 ? 128 * kKiB + rng() % (512 * kKiB) : 1 + rng() % 8000;
        auto* p = static_cast<unsigned char*>(a.allocate(size));
        if (!p) {
          ++bad;
          continue;
        }
        std::memset(p, static_cast<int>(seed), size);
        mine.emplace_back(p, size);
      } else {
        auto idx = rng() % mine.size();
        auto [p, size] = mine[idx];
        if (p[0] != static_cast<unsigned char>(seed) || p[size - 1] != static_cast<unsigned char>(seed)) ++bad;
        a.deallocate(p);
        mine[idx] = mine.back();
        mine.pop_back();
      }
    }
    for (auto [p, size] : mine) a.deallocate(p);
  };
  std::thread t1(worker, 11), t2(worker, 23), t3(worker, 37);
  t1.join();
  t2.join();
  t3.join();
  EXPECT_EQ(bad.load(), 0);
  EXPECT_TRUE(a.arena().empty());
  EXPECT_EQ(a.large_table().size(), 0u);
}

}  // namespace
}  // namespace fastalloc::alloc
