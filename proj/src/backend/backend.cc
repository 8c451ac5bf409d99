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

#include "fastalloc/backend/backend.h"

#include "fastalloc/common/units.h"

namespace fastalloc::backend {

std::string_view op_name(BackendOp op) {
  switch (op) {
    case BackendOp::kCreateRegion: return "create_region";
    case BackendOp::kGrowRegion: return "grow_region";
    case BackendOp::kShrinkRegion: return "shrink_region";
    case BackendOp::kReleaseRegion: return "release_region";
    case BackendOp::kMapChunk: return "map_chunk";
    case BackendOp::kUnmapChunk: return "unmap_chunk";
    case BackendOp::kResizeChunk: return "resize_chunk";
    case BackendOp::kPrefault: return "prefault";
    case BackendOp::kTouch: return "touch";
    case BackendOp::kUnpin: return "unpin";
    case BackendOp::kStats: return "memory_stats";
    case BackendOp::kAdvise: return "advise_release";
    case BackendOp::kLoadFile: return "load_file";
    case BackendOp::kBackgroundReclaim: return "background_reclaim";
  }
  return "unknown";
}

void write_event_csv(std::ostream& out, const std::vector<BackendEvent>& events) {
  out << "seq,op,bytes,elapsed_us,available_after\n";
  for (const auto& e : events) {
    out << e.seq << ',' << op_name(e.op) << ',' << e.bytes << ',' << format_us(e.elapsed) << ','
        << e.available_after << '\n';
  }
}

void Backend::set_event_logging(bool enabled) {
  std::lock_guard lock(log_mu_);
  logging_ = enabled;
}

std::vector<BackendEvent> Backend::events() const {
  std::lock_guard lock(log_mu_);
  return log_;
}

void Backend::clear_events() {
  std::lock_guard lock(log_mu_);
  log_.clear();
}

void Backend::record(BackendOp op, std::size_t bytes, std::chrono::nanoseconds elapsed,
                     std::size_t available_after) {
  elapsed_total_.fetch_add(elapsed.count(), std::memory_order_acq_rel);
  std::lock_guard lock(log_mu_);
  if (!logging_) return;
  log_.push_back(BackendEvent{next_seq_++, op, bytes, elapsed, available_after});
}

}  // namespace fastalloc::backend
