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
// Records of management rounds.

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string_view>
#include <vector>

#include "fastalloc/alloc/policy.h"

namespace fastalloc::alloc {

enum class Component { kHeap, kMmap };

struct RoundAction {
  Component component = Component::kHeap;
  // grow, prefault, shrink, unpin, resize, map, unmap
  std::string_view action;
  std::size_t bytes = 0;
  std::chrono::nanoseconds elapsed{0};
};

struct RoundReport {
  std::uint64_t round = 0;
  bool managed = false;
  std::vector<RoundAction> actions;

  Thresholds heap_thresholds;
  Thresholds mmap_thresholds;

  std::size_t heap_top_before = 0;
  std::size_t heap_reserved = 0;
  std::size_t heap_trimmed = 0;
  std::size_t heap_grow_calls = 0;
  bool heap_reservation_ran = false;
  bool heap_partial = false;
  std::size_t heap_top_after = 0;

  std::size_t pool_shrunk = 0;
  std::size_t pool_total_before = 0;
  std::size_t pool_reserved = 0;
  std::size_t pool_released = 0;
  bool pool_reservation_ran = false;
  bool pool_partial = false;
  std::size_t pool_total_after = 0;

  std::chrono::nanoseconds elapsed() const;
  std::size_t backend_calls(Component c) const;
  std::size_t backend_calls() const { return actions.size(); }
};

// `round,component,action,bytes,elapsed_us`
void write_round_csv(std::ostream& out, const std::vector<RoundReport>& rounds);

}  // namespace fastalloc::alloc
