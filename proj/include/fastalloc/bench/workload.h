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
// Fixed-size allocation micro benchmark.

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fastalloc/alloc/policy.h"
#include "fastalloc/backend/backend.h"

namespace fastalloc::bench {

enum class Mode { kBaseline, kHermes };
enum class BackendKind { kReal, kSim };

std::string_view mode_name(Mode m);
std::string_view backend_name(BackendKind b);
std::optional<Mode> parse_mode(std::string_view text);
std::optional<BackendKind> parse_backend(std::string_view text);

struct WorkloadSpec {
  std::size_t request_size = 1024;
  std::size_t total_bytes = std::size_t{1} << 30;
  Mode mode = Mode::kHermes;
  BackendKind backend = BackendKind::kSim;
  std::optional<double> rsv_factor;
  // Allocator stress variant: after every allocation a random live block
  // is freed with probability 1/2. Not comparable with the fill runs.
  bool mixed = false;
  std::uint64_t seed = 1;

  // Throws std::invalid_argument when total_bytes < request_size or the
  // request size is zero.
  void validate() const;
  std::size_t sample_count() const;
};

struct MicroOptions {
  alloc::ReservationPolicy policy;
  // Simulated runs only: after each request the application spends
  // request_size / fill_bandwidth writing the block. This is what moves the
  // virtual clock forward between requests that allocate without faulting.
  double fill_bandwidth = 10.0 * (1u << 30);  // bytes per second
  // Simulated runs only. By default a round costs the application no time
  // and the next one starts at the next interval boundary, however long the
  // round took. With serial_management a round that overruns pushes the
  // next one back, as a single management thread would.
  bool serial_management = false;
};

// State at the end of one management round (hermes mode).
struct RoundTrace {
  double clock_us = 0;
  std::size_t small_demand = 0;  // bytes requested in the interval just closed
  std::size_t large_demand = 0;
  alloc::Thresholds heap;
  alloc::Thresholds mmap;
  std::size_t heap_top_after = 0;
  std::size_t pool_total_after = 0;
  std::size_t heap_reserved = 0;
  std::size_t pool_reserved = 0;
  bool heap_reservation_ran = false;
  bool pool_reservation_ran = false;
  bool partial = false;
  double elapsed_us = 0;
};

struct LatencySeries {
  WorkloadSpec spec;
  // Sample i is request i: allocate plus first touch of the block, in us.
  std::vector<double> latency_us;
  bool partial = false;
  std::string abort_reason;

  // Simulated clock at the end of the run (sim) or wall time (real).
  double run_time_us = 0;
  // Time spent inside management rounds; off the request path.
  double management_us = 0;
  // Real runs: median cost of one clock read pair, in ns.
  double timer_overhead_ns = 0;
  std::vector<RoundTrace> rounds;

  // Management time per unit of run time; above 1 a single management
  // thread could not have kept up.
  double management_busy() const { return run_time_us > 0 ? management_us / run_time_us : 0.0; }
};

// Runs the workload against `backend` (which must match spec.backend).
// Allocations stay live until the run ends; nothing is freed in between
// unless spec.mixed is set. On the simulated backend rounds run whenever
// the virtual clock crosses an interval boundary and their cost is kept
// out of the samples; on the real backend the allocator's own thread
// drives them.
LatencySeries run_micro(const WorkloadSpec& spec, backend::Backend& backend, const MicroOptions& options = {});

}  // namespace fastalloc::bench
