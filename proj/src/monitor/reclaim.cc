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
#include "fastalloc/monitor/reclaim.h"

#include <algorithm>
#include <iomanip>

#include "fastalloc/common/kv_config.h"

namespace fastalloc::monitor {

void ReclaimConfig::validate() const {
  if (!(adv_thr > 0.0 && adv_thr < 1.0)) throw ConfigError("adv_thr must be in (0, 1)");
  if (poll_period.count() <= 0) throw ConfigError("poll period must be positive");
}

std::vector<Advisory> reclaim_pass(backend::Backend& backend, std::vector<BatchFileEntry> entries,
                                   const ReclaimConfig& config, const AdvisoryErrorSink& on_error) {
  std::vector<Advisory> issued;
  double usage = backend.memory_stats().occupancy();
  if (usage <= config.adv_thr) return issued;
  std::stable_sort(entries.begin(), entries.end(),
                   [](const BatchFileEntry& a, const BatchFileEntry& b) { return a.size > b.size; });
  for (const auto& e : entries) {
    if (usage <= config.adv_thr) break;
    if (e.cached == 0) continue;
    Advisory a;
    a.ts = std::chrono::system_clock::now();
    a.owner = e.owner;
    a.file = e.file;
    a.bytes = e.size;
    a.usage_before = usage;
    try {
      backend.advise_release_file_cache(e.file, 0);
    } catch (const std::exception& ex) {
      a.ok = false;
      a.error = ex.what();
    }
    try {
      usage = backend.memory_stats().occupancy();
    } catch (const std::exception& ex) {
      if (a.ok) {
        a.ok = false;
        a.error = ex.what();
      }
    }
    a.usage_after = usage;
    if (!a.ok && on_error) on_error(a);
    issued.push_back(std::move(a));
  }
  return issued;
}

namespace {

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void write_advisory_header(std::ostream& out) { out << "ts,file,bytes,usage_before,usage_after\n"; }

void write_advisory_rows(std::ostream& out, const std::vector<Advisory>& advisories) {
  for (const auto& a : advisories) {
    const auto ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(a.ts.time_since_epoch()).count();
    out << ms << ',' << csv_field(a.file) << ',' << a.bytes << ',' << std::fixed << std::setprecision(6) << a.usage_before
        << ',' << a.usage_after << '\n';
    out.unsetf(std::ios::floatfield);
  }
}

}  // namespace fastalloc::monitor
