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

#include <algorithm>

#include "fastalloc/common/units.h"
#include "timed.h"

namespace fastalloc::alloc {

using backend::ContractViolation;

namespace {

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

Allocator::Allocator(ReservationPolicy policy, backend::Backend& backend, const RegistryProbe* probe,
                     DriveMode mode, pid_t pid)
    : policy_((policy.validate(), std::move(policy))),
      backend_(backend),
      probe_(probe),
      mode_(mode),
      pid_(pid),
      page_(backend.page_size()),
      arena_(backend, policy_.region_limit),
      pool_(policy_.mmap_threshold, policy_.table_size),
      metrics_(policy_.mmap_threshold, page_, policy_.mmap_threshold) {
  heap_thresholds_ = update_thresholds(metrics_.last().small, policy_, page_);
  mmap_thresholds_ = update_thresholds(metrics_.last().large, policy_, page_);
  large_trim_thr_.store(mmap_thresholds_.trim_thr);
  last_probe_ns_.store(now_ns());
  if (mode_ == DriveMode::kThread && probe_ != nullptr && probe_->is_registered(pid_)) start_thread();
}

Allocator::~Allocator() {
  {
    std::lock_guard lock(thread_mu_);
    thread_.request_stop();
  }
  if (thread_.joinable()) thread_.join();
  try {
    for (const auto& c : table_.take_all()) backend_.unmap_chunk(c);
    for (const auto& c : pool_.drain()) backend_.unmap_chunk(c);
  } catch (...) {
  }
}

void* Allocator::allocate(std::size_t size) {
  if (size == 0) throw ContractViolation("allocate: zero size");
  metrics_.record_request(size);
  if (mode_ == DriveMode::kThread && probe_ != nullptr && !thread_alive_.load(std::memory_order_acquire)) {
    maybe_probe();
  }
  if (size >= policy_.mmap_threshold) return allocate_large(size);
  HeapArena::Source source;
  void* p = arena_.allocate(size, &source);
  if (p != nullptr) (source == HeapArena::Source::kGrowth ? fallback_small_ : fast_small_).fetch_add(1);
  return p;
}

void* Allocator::allocate_large(std::size_t size) {
  const std::size_t need = round_up(size, page_);
  if (managed_.load(std::memory_order_acquire)) {
    bool contended = false;
    if (auto c = pool_.try_take(need, &contended)) {
      std::optional<backend::ChunkHandle> chunk = c;
      if (c->length < need) {
        chunk = backend_.resize_chunk(*c, need);
        if (!chunk) pool_.insert(*c);
      }
      if (chunk) {
        if (chunk->pinned) {
          backend_.unpin(chunk->range());
          chunk->pinned = false;
        }
        table_.add(*chunk, need);
        fast_large_.fetch_add(1);
        return chunk->data();
      }
    }
  }
  auto c = backend_.map_chunk(need);
  if (!c) return nullptr;
  table_.add(*c, need);
  fallback_large_.fetch_add(1);
  return c->data();
}

void Allocator::deallocate(void* p) {
  if (p == nullptr) return;
  if (arena_.owns(p)) {
    arena_.deallocate(p);
    return;
  }
  auto c = table_.release(reinterpret_cast<std::uintptr_t>(p));
  if (!c) return;  // a round is shrinking it and will finish the free
  recycle_or_unmap(pool_, backend_, *c, managed_.load(std::memory_order_acquire) && policy_.recycle_large,
                   large_trim_thr_.load(std::memory_order_acquire));
}

std::size_t Allocator::usable_size(const void* p) const {
  if (arena_.owns(p)) return arena_.block_size(p);
  return table_.usable_size(reinterpret_cast<std::uintptr_t>(p));
}

RoundReport Allocator::run_management_round() {
  std::lock_guard lock(round_mu_);
  RoundReport report;
  report.round = rounds_++;
  bool registered = false;
  try {
    registered = probe_ != nullptr && probe_->is_registered(pid_);
  } catch (...) {
    registered = false;
  }
  if (!registered) {
    if (managed_.load()) teardown_locked(report);
  } else {
    if (!managed_.load()) enable_locked();
    report.managed = true;
    const MetricsSnapshot snap = metrics_.rollover();
    heap_thresholds_ = update_thresholds(snap.small, policy_, page_);
    mmap_thresholds_ = update_thresholds(snap.large, policy_, page_);
    mmap_thresholds_.mem_chunk = std::max(mmap_thresholds_.mem_chunk, round_up(policy_.mmap_threshold, page_));
    large_trim_thr_.store(mmap_thresholds_.trim_thr, std::memory_order_release);
    heap_round(arena_, heap_thresholds_, report);
    mmap_round(pool_, table_, backend_, mmap_thresholds_, policy_.recycle_large, report);
  }
  if (keep_reports_) reports_.push_back(report);
  return report;
}

void Allocator::enable_locked() {
  arena_.set_managed(true);
  managed_.store(true, std::memory_order_release);
}

void Allocator::teardown_locked(RoundReport& report) {
  managed_.store(false, std::memory_order_release);
  arena_.set_managed(false);
  arena_.unpin_handed_out(report, /*all=*/true);
  report.heap_trimmed = arena_.trim_top(0, report);
  report.heap_top_after = arena_.top_free();
  for (const auto& c : pool_.drain()) {
    auto elapsed = timed(backend_, [&] { backend_.unmap_chunk(c); });
    report.actions.push_back({Component::kMmap, "unmap", c.length, elapsed});
    report.pool_released += c.length;
  }
}

void Allocator::maybe_probe() {
  const std::int64_t now = now_ns();
  std::int64_t last = last_probe_ns_.load(std::memory_order_relaxed);
  const auto period = std::chrono::duration_cast<std::chrono::nanoseconds>(policy_.probe_period).count();
  if (now - last < period) return;
  if (!last_probe_ns_.compare_exchange_strong(last, now)) return;
  bool registered = false;
  try {
    registered = probe_->is_registered(pid_);
  } catch (...) {
  }
  if (registered) start_thread();
}

void Allocator::start_thread() {
  std::lock_guard lock(thread_mu_);
  if (thread_alive_.load()) return;
  if (thread_.joinable()) {
    thread_.request_stop();
    thread_.join();
  }
  thread_alive_.store(true);
  thread_ = std::jthread([this](std::stop_token stop) { thread_main(stop); });
}

void Allocator::thread_main(std::stop_token stop) {
  auto next = std::chrono::steady_clock::now();
  while (!stop.stop_requested()) {
    RoundReport report = run_management_round();
    if (!report.managed) break;
    next += policy_.interval;
    const auto now = std::chrono::steady_clock::now();
    if (next < now) next = now;
    std::unique_lock lock(sleep_mu_);
    sleep_cv_.wait_until(lock, stop, next, [] { return false; });
  }
  thread_alive_.store(false);
}

bool Allocator::thread_running() const { return thread_alive_.load(); }

void Allocator::set_keep_reports(bool keep) {
  std::lock_guard lock(round_mu_);
  keep_reports_ = keep;
}

std::vector<RoundReport> Allocator::reports() const {
  std::lock_guard lock(round_mu_);
  return reports_;
}

Diagnostics Allocator::diagnostics() const {
  Diagnostics d;
  d.managed = managed_.load();
  {
    std::lock_guard lock(round_mu_);
    d.rounds = rounds_;
    d.heap_thresholds = heap_thresholds_;
    d.mmap_thresholds = mmap_thresholds_;
  }
  d.last_interval = metrics_.last();
  d.current_interval = metrics_.current();
  d.top_free = arena_.top_free();
  d.heap_committed = arena_.committed();
  d.heap_live_blocks = arena_.live_blocks();
  d.bucket_counts = pool_.bucket_counts();
  d.bucket_bytes = pool_.bucket_bytes();
  d.pool_total = pool_.total_size();
  d.large_live = table_.size();
  d.pending_shrinks = table_.pending_shrinks();
  d.fast_small = fast_small_.load();
  d.fallback_small = fallback_small_.load();
  d.fast_large = fast_large_.load();
  d.fallback_large = fallback_large_.load();
  d.pinned_bytes = arena_.pinned_bytes() + pool_.pinned_bytes();
  d.max_wait_ops = arena_.max_wait_ops();
  return d;
}

}  // namespace fastalloc::alloc
