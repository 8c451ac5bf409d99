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

#pragma once

#include <chrono>

#include "fastalloc/backend/backend.h"

namespace fastalloc::alloc {

// Elapsed time of one backend call: the modeled cost on a simulated backend,
// wall time otherwise.
template <typename F>
std::chrono::nanoseconds timed(backend::Backend& b, F&& f) {
  if (b.simulated()) {
    auto before = b.total_elapsed();
    f();
    return b.total_elapsed() - before;
  }
  auto start = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start);
}

}  // namespace fastalloc::alloc
