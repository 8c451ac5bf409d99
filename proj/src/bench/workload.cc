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
#include "fastalloc/bench/workload.h"

#include <algorithm>
#include <random>
#include <stdexcept>
#include <thread>

#include "fastalloc/alloc/allocator.h"
#include "fastalloc/common/units.h"

namespace fastalloc::bench {

using namespace std::chrono;

std::string_view mode_name(Mode m) { return m == Mode::kBaseline ? "baseline" : "hermes"; }
std::string_view backend_name(BackendKind b) { return b == BackendKind::kReal ? "real" : "sim"; }

std::optional<Mode> parse_mode(std::string_view text) {
  if (text == "baseline") return Mode::kBaseline;
  if (text == "hermes") return Mode::kHermes;
  return std::nullopt;
}

std::optional<BackendKind> parse_backend(std::string_view text) {
  if (text == "real") return BackendKind::kReal;
  if (text == "sim") return BackendKind::kSim;
  return std::nullopt;
}

void WorkloadSpec::validate() const {
  if (request_size == 0) throw std::invalid_argument("request size must be positive");
  if (total_bytes < request_size) throw std::invalid_argument("total bytes below request size");
  if (rsv_factor && !(*rsv_factor > 0)) throw std::invalid_argument("rsv_factor must be positive");
}

std::size_t WorkloadSpec::sample_count() const { return ceil_div(total_bytes, request_size); }

namespace {

double median_timer_overhead_ns() {
  std::vector<double> v;
  v.reserve(1001);
  for (int i = 0; i < 1001; ++i) {
    auto a = steady_clock::now();
    auto b = steady_clock::now();
    v.push_back(static_cast<double>(duration_cast<nanoseconds>(b - a).count()));
  }
  std::nth_element(v.begin(), v.begin() + 500, v.end());
  return v[500];
}

struct Driver {
  const WorkloadSpec& spec;
  backend::Backend& backend;
  alloc::Allocator& allocator;
  LatencySeries& out;
  std::vector<void*> live;
  std::mt19937_64 rng;

  // Returns false (and flags the series) on allocation failure.
  template <typename Measure>
  bool request(Measure&& measure) {
    void* p = nullptr;
    const double us = measure([&] {
      p = allocator.allocate(spec.request_size);
      if (p != nullptr) {
        backend.touch({reinterpret_cast<std::uintptr_t>(p), spec.request_size});
      }
    });
    if (p == nullptr) {
      out.partial = true;
      out.abort_reason = "allocation of " + std::to_string(spec.request_size) + " bytes failed after " +
                         std::to_string(out.latency_us.size()) + " requests";
      return false;
    }
    out.latency_us.push_back(us);
    live.push_back(p);
    if (spec.mixed && rng() % 2 == 0) {
      const std::size_t victim = rng() % live.size();
      allocator.deallocate(live[victim]);
      live[victim] = live.back();
      live.pop_back();
    }
    return true;
  }

  void release_all() {
    for (void* p : live) allocator.deallocate(p);
    live.clear();
  }
};

// `a` supplies the demand of the interval the round just closed; null when
// the report is read back later and that figure is gone.
RoundTrace trace_of(const alloc::RoundReport& r, const alloc::Allocator* a, double clock_us) {
  RoundTrace t;
  t.clock_us = clock_us;
  if (a != nullptr) {
    const auto d = a->diagnostics();
    t.small_demand = d.last_interval.small.bytes;
    t.large_demand = d.last_interval.large.bytes;
  }
  t.heap = r.heap_thresholds;
  t.mmap = r.mmap_thresholds;
  t.heap_top_after = r.heap_top_after;
  t.pool_total_after = r.pool_total_after;
  t.heap_reserved = r.heap_reserved;
  t.pool_reserved = r.pool_reserved;
  t.heap_reservation_ran = r.heap_reservation_ran;
  t.pool_reservation_ran = r.pool_reservation_ran;
  t.partial = r.heap_partial || r.pool_partial;
  t.elapsed_us = to_us(r.elapsed());
  return t;
}

alloc::ReservationPolicy effective_policy(const WorkloadSpec& spec, const MicroOptions& options) {
  alloc::ReservationPolicy policy = options.policy;
  if (spec.rsv_factor) policy.rsv_factor = *spec.rsv_factor;
  return policy;
}

void run_sim(const WorkloadSpec& spec, backend::Backend& backend, const MicroOptions& options,
             LatencySeries& out) {
  const alloc::ReservationPolicy policy = effective_policy(spec, options);
  alloc::StaticRegistryProbe probe(spec.mode == Mode::kHermes);
  alloc::Allocator a(policy, backend, &probe, alloc::DriveMode::kManual);
  Driver d{spec, backend, a, out, {}, std::mt19937_64(spec.seed)};

  const double interval_us = static_cast<double>(duration_cast<nanoseconds>(policy.interval).count()) / 1e3;
  const double fill_us = static_cast<double>(spec.request_size) / options.fill_bandwidth * 1e6;
  double clock_us = 0;
  double next_round_us = 0;
  auto measure = [&](auto&& fn) {
    const auto before = backend.total_elapsed();
    fn();
    return to_us(backend.total_elapsed() - before);
  };

  const std::size_t n = spec.sample_count();
  for (std::size_t i = 0; i < n; ++i) {
    // The management thread wakes at every boundary the clock has passed,
    // including those that fell inside a slow request.
    while (spec.mode == Mode::kHermes && clock_us >= next_round_us) {
      const alloc::RoundReport r = a.run_management_round();
      out.rounds.push_back(trace_of(r, &a, next_round_us));
      out.management_us += out.rounds.back().elapsed_us;
      const double busy_until = next_round_us + out.rounds.back().elapsed_us;
      next_round_us += interval_us;
      if (options.serial_management) next_round_us = std::max(next_round_us, busy_until);
    }
    if (!d.request(measure)) break;
    clock_us += out.latency_us.back() + fill_us;
  }
  out.run_time_us = clock_us;
  d.release_all();
}

void run_real(const WorkloadSpec& spec, backend::Backend& backend, const MicroOptions& options,
              LatencySeries& out) {
  const alloc::ReservationPolicy policy = effective_policy(spec, options);
  alloc::StaticRegistryProbe probe(spec.mode == Mode::kHermes);
  alloc::Allocator a(policy, backend, &probe, alloc::DriveMode::kThread);
  a.set_keep_reports(spec.mode == Mode::kHermes);
  if (spec.mode == Mode::kHermes) {
    const auto deadline = steady_clock::now() + seconds(2);
    while (a.diagnostics().rounds == 0 && steady_clock::now() < deadline) std::this_thread::sleep_for(microseconds(100));
  }
  Driver d{spec, backend, a, out, {}, std::mt19937_64(spec.seed)};
  out.timer_overhead_ns = median_timer_overhead_ns();
  auto measure = [](auto&& fn) {
    const auto t0 = steady_clock::now();
    fn();
    const auto t1 = steady_clock::now();
    return static_cast<double>(duration_cast<nanoseconds>(t1 - t0).count()) / 1e3;
  };
  const auto start = steady_clock::now();
  const std::size_t n = spec.sample_count();
  for (std::size_t i = 0; i < n; ++i) {
    if (!d.request(measure)) break;
  }
  out.run_time_us = static_cast<double>(duration_cast<nanoseconds>(steady_clock::now() - start).count()) / 1e3;
  for (const auto& r : a.reports()) {
    RoundTrace t = trace_of(r, nullptr, 0);
    out.management_us += t.elapsed_us;
    out.rounds.push_back(t);
  }
  d.release_all();
}

}  // namespace

LatencySeries run_micro(const WorkloadSpec& spec, backend::Backend& backend, const MicroOptions& options) {
  spec.validate();
  if (backend.simulated() != (spec.backend == BackendKind::kSim)) {
    throw std::invalid_argument("backend does not match the workload's backend kind");
  }
  LatencySeries out;
  out.spec = spec;
  out.latency_us.reserve(spec.sample_count());
  if (spec.backend == BackendKind::kSim) {
    run_sim(spec, backend, options, out);
  } else {
    run_real(spec, backend, options, out);
  }
  return out;
}

}  // namespace fastalloc::bench
