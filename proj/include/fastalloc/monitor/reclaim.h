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
// Largest-file-first release of batch-job file cache.

#pragma once

#include <chrono>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "fastalloc/backend/backend.h"
#include "fastalloc/monitor/batch_files.h"

namespace fastalloc::monitor {

struct ReclaimConfig {
  // Fraction of total memory in use above which a pass releases cache.
  double adv_thr = 0.90;
  std::chrono::milliseconds poll_period{100};

  // Throws ConfigError unless 0 < adv_thr < 1 and poll_period > 0.
  void validate() const;
};

struct Advisory {
  std::chrono::system_clock::time_point ts;
  pid_t owner = 0;
  std::string file;
  std::size_t bytes = 0;  // file size
  double usage_before = 0;
  double usage_after = 0;
  bool ok = true;
  std::string error;
};

using AdvisoryErrorSink = std::function<void(const Advisory&)>;

// Usage is BackendStats::occupancy(), so page cache counts as used.
// If usage exceeds adv_thr, advises the backend to drop each entry's cache
// in non-increasing size order, re-reading stats after every advisory and
// stopping once usage is at or below adv_thr. Entries with nothing cached
// are skipped. A failing advisory is reported to `on_error` and the pass
// moves on to the next file.
std::vector<Advisory> reclaim_pass(backend::Backend& backend, std::vector<BatchFileEntry> entries,
                                   const ReclaimConfig& config, const AdvisoryErrorSink& on_error = {});

// `ts,file,bytes,usage_before,usage_after`; ts in milliseconds since epoch.
void write_advisory_header(std::ostream& out);
void write_advisory_rows(std::ostream& out, const std::vector<Advisory>& advisories);

}  // namespace fastalloc::monitor
