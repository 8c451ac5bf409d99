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
// Memory pressure generators: anonymous filler and file cache plus filler.
//
// On the simulated backend pressure is bookkeeping inside the simulator and
// lands exactly on the target. On a real host a child process allocates in
// 64 MB steps, re-reading MemAvailable after each, and holds the memory
// until the handle is released.

#pragma once

#include <sys/types.h>

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "fastalloc/backend/backend.h"

namespace fastalloc::bench {

class PressureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kPressureStep = std::size_t{64} << 20;

class PressureHandle {
 public:
  virtual ~PressureHandle() = default;
  // Frees everything the generator holds. Idempotent.
  virtual void release() = 0;
  virtual std::size_t anon_bytes() const = 0;
  // Files brought into the page cache (simulator ids or scratch paths).
  virtual std::vector<std::string> files() const = 0;
};

struct FilePressureOptions {
  // Explicit file sizes; when empty file_bytes is cut into pieces of at
  // most `piece` bytes.
  std::vector<std::size_t> sizes;
  std::size_t piece = std::size_t{1} << 30;
  // Real hosts: directory for scratch files (created when missing).
  std::string scratch_dir = "/tmp/fastalloc-pressure";
  // Real hosts: pause between re-reads of the files.
  int reread_ms = 200;
};

// Holds anonymous memory until available memory is at or below target_free.
std::unique_ptr<PressureHandle> gen_anon_pressure(backend::Backend& backend, std::size_t target_free);

// Loads file_bytes of file data into the page cache, then fills with
// anonymous memory down to target_free. file_bytes == 0 is plain anonymous
// pressure.
std::unique_ptr<PressureHandle> gen_file_pressure(backend::Backend& backend, std::size_t file_bytes,
                                                  std::size_t target_free, const FilePressureOptions& options = {});

// Splits `total` into pieces of at most `piece` bytes (last one shorter).
std::vector<std::size_t> split_sizes(std::size_t total, std::size_t piece);

}  // namespace fastalloc::bench
