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
// Reservation tunables and the per-interval thresholds derived from demand.

#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>

#include "fastalloc/alloc/metrics.h"
#include "fastalloc/common/kv_config.h"

namespace fastalloc::alloc {

struct ReservationPolicy {
  double rsv_factor = 2.0;
  std::chrono::microseconds interval{2000};
  std::size_t min_rsv = std::size_t{5} << 20;
  std::size_t mmap_threshold = std::size_t{128} << 10;
  std::size_t table_size = 8;
  // rsv_thr = rsv_thr_ratio * tgt_mem, trim_thr = trim_thr_ratio * tgt_mem.
  double rsv_thr_ratio = 0.5;
  double trim_thr_ratio = 2.0;
  // Recycle freed large chunks into the pool (up to trim_thr).
  bool recycle_large = true;
  // How often an unregistered instance re-reads the registry.
  std::chrono::milliseconds probe_period{100};
  // Address space reserved for the heap region.
  std::size_t region_limit = std::size_t{4} << 30;

  // Fixed values that replace the demand-derived ones when set.
  std::optional<std::size_t> rsv_thr;
  std::optional<std::size_t> tgt_mem;
  std::optional<std::size_t> trim_thr;
  std::optional<std::size_t> mem_chunk;

  // Keys: rsv_factor, interval_ms, min_rsv, mmap_threshold, table_size,
  // rsv_thr_ratio, trim_thr_ratio, recycle_large, probe_period_ms,
  // region_limit, rsv_thr, tgt_mem, trim_thr, mem_chunk.
  static ReservationPolicy from_config(const KeyValueConfig& cfg);
  static ReservationPolicy load(const std::string& path);

  // Throws ConfigError when the tunables cannot produce ordered thresholds.
  void validate() const;
};

struct Thresholds {
  std::size_t rsv_thr = 0;
  std::size_t tgt_mem = 0;
  std::size_t trim_thr = 0;
  std::size_t mem_chunk = 0;

  friend bool operator==(const Thresholds&, const Thresholds&) = default;
};

// tgt_mem = max(page_ceil(rsv_factor * bytes), min_rsv); rsv_thr and trim_thr
// scale tgt_mem by their ratios; mem_chunk = page_ceil(mean), at least a page.
Thresholds update_thresholds(const ClassMetrics& metrics, const ReservationPolicy& policy,
                             std::size_t page_size);

}  // namespace fastalloc::alloc
