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

#include "fastalloc/alloc/policy.h"

#include <algorithm>
#include <cmath>

#include "fastalloc/common/units.h"

namespace fastalloc::alloc {

ReservationPolicy ReservationPolicy::from_config(const KeyValueConfig& cfg) {
  cfg.reject_unknown({"rsv_factor", "interval_ms", "min_rsv", "mmap_threshold", "table_size",
                      "rsv_thr_ratio", "trim_thr_ratio", "recycle_large", "probe_period_ms",
                      "region_limit", "rsv_thr", "tgt_mem", "trim_thr", "mem_chunk"});
  ReservationPolicy p;
  if (cfg.has("rsv_factor")) p.rsv_factor = cfg.get_double("rsv_factor");
  if (cfg.has("interval_ms")) {
    p.interval = std::chrono::microseconds(std::llround(cfg.get_double("interval_ms") * 1000.0));
  }
  if (cfg.has("min_rsv")) p.min_rsv = cfg.get_size("min_rsv");
  if (cfg.has("mmap_threshold")) p.mmap_threshold = cfg.get_size("mmap_threshold");
  if (cfg.has("table_size")) p.table_size = cfg.get_size("table_size");
  if (cfg.has("rsv_thr_ratio")) p.rsv_thr_ratio = cfg.get_double("rsv_thr_ratio");
  if (cfg.has("trim_thr_ratio")) p.trim_thr_ratio = cfg.get_double("trim_thr_ratio");
  if (cfg.has("recycle_large")) p.recycle_large = cfg.get_bool("recycle_large");
  if (cfg.has("probe_period_ms")) {
    p.probe_period = std::chrono::milliseconds(std::llround(cfg.get_double("probe_period_ms")));
  }
  if (cfg.has("region_limit")) p.region_limit = cfg.get_size("region_limit");
  if (cfg.has("rsv_thr")) p.rsv_thr = cfg.get_size("rsv_thr");
  if (cfg.has("tgt_mem")) p.tgt_mem = cfg.get_size("tgt_mem");
  if (cfg.has("trim_thr")) p.trim_thr = cfg.get_size("trim_thr");
  if (cfg.has("mem_chunk")) p.mem_chunk = cfg.get_size("mem_chunk");
  p.validate();
  return p;
}

ReservationPolicy ReservationPolicy::load(const std::string& path) {
  return from_config(KeyValueConfig::load(path));
}

void ReservationPolicy::validate() const {
  if (!(rsv_factor > 0)) throw ConfigError("rsv_factor must be positive");
  if (interval.count() <= 0) throw ConfigError("interval must be positive");
  if (mmap_threshold == 0 || table_size == 0) throw ConfigError("mmap_threshold and table_size must be positive");
  if (!(rsv_thr_ratio > 0 && rsv_thr_ratio <= 1)) throw ConfigError("rsv_thr_ratio must lie in (0, 1]");
  if (!(trim_thr_ratio >= 1)) throw ConfigError("trim_thr_ratio must be at least 1");
  if (mem_chunk && *mem_chunk == 0) throw ConfigError("mem_chunk must be positive");
  if (rsv_thr && tgt_mem && *rsv_thr > *tgt_mem) throw ConfigError("rsv_thr exceeds tgt_mem");
  if (tgt_mem && trim_thr && *tgt_mem > *trim_thr) throw ConfigError("tgt_mem exceeds trim_thr");
  if (rsv_thr && trim_thr && *rsv_thr > *trim_thr) throw ConfigError("rsv_thr exceeds trim_thr");
  if (tgt_mem && *tgt_mem < min_rsv) throw ConfigError("tgt_mem below min_rsv");
}

Thresholds update_thresholds(const ClassMetrics& metrics, const ReservationPolicy& policy,
                             std::size_t page_size) {
  Thresholds t;
  const double want = policy.rsv_factor * static_cast<double>(metrics.bytes);
  t.tgt_mem = std::max(round_up(static_cast<std::size_t>(std::ceil(want)), page_size), policy.min_rsv);
  if (policy.tgt_mem) t.tgt_mem = *policy.tgt_mem;
  t.rsv_thr = policy.rsv_thr ? *policy.rsv_thr
                             : static_cast<std::size_t>(static_cast<double>(t.tgt_mem) * policy.rsv_thr_ratio);
  t.trim_thr = policy.trim_thr ? *policy.trim_thr
                               : static_cast<std::size_t>(static_cast<double>(t.tgt_mem) * policy.trim_thr_ratio);
  // Overrides of only some fields may break the ordering; clamp.
  t.rsv_thr = std::min(t.rsv_thr, t.tgt_mem);
  t.trim_thr = std::max(t.trim_thr, t.tgt_mem);
  t.mem_chunk = policy.mem_chunk ? *policy.mem_chunk : std::max(round_up(metrics.mean, page_size), page_size);
  return t;
}

}  // namespace fastalloc::alloc
