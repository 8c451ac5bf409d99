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
// Discovery of the data files held open by batch jobs.

#pragma once

#include <sys/types.h>

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fastalloc/monitor/registry.h"

namespace fastalloc::backend {
class SimBackend;
}

namespace fastalloc::monitor {

struct BatchFileEntry {
  pid_t owner = 0;
  std::string file;
  std::size_t size = 0;
  std::size_t cached = 0;  // estimate, never above size
};

class BatchFileSource {
 public:
  virtual ~BatchFileSource() = default;
  // Open regular files of `pid`; nullopt when the process is gone.
  virtual std::optional<std::vector<BatchFileEntry>> files_of(pid_t pid) = 0;
};

// Walks /proc/<pid>/fd. Processes that cannot be inspected (permissions)
// report no files.
class ProcFdSource final : public BatchFileSource {
 public:
  explicit ProcFdSource(std::string proc_root = "/proc") : proc_root_(std::move(proc_root)) {}
  std::optional<std::vector<BatchFileEntry>> files_of(pid_t pid) override;

 private:
  std::string proc_root_;
};

// Declared file list for simulated runs. Manifest lines: `<pid> <file> <size>`
// (size accepts unit suffixes; `#` starts a comment).
class ManifestSource final : public BatchFileSource {
 public:
  // Cached estimates come from `sim` when given, else equal the size.
  explicit ManifestSource(std::vector<BatchFileEntry> entries, const backend::SimBackend* sim = nullptr);
  static ManifestSource parse(const std::string& text, const backend::SimBackend* sim = nullptr);
  static ManifestSource load(const std::string& path, const backend::SimBackend* sim = nullptr);

  std::optional<std::vector<BatchFileEntry>> files_of(pid_t pid) override;

  // Marks a pid as exited; later lookups return nullopt.
  void mark_exited(pid_t pid);
  const std::vector<BatchFileEntry>& entries() const { return entries_; }

 private:
  std::vector<BatchFileEntry> entries_;
  std::map<pid_t, bool> exited_;
  const backend::SimBackend* sim_;
};

struct ScanResult {
  std::vector<BatchFileEntry> entries;
  // Batch pids whose files could not be enumerated because they exited.
  std::vector<pid_t> exited;
};

// One entry per distinct file open by a batch pid. Files that any
// latency-critical pid also holds open are left out.
ScanResult scan_batch_files(const ServiceRegistry& registry, BatchFileSource& source);

}  // namespace fastalloc::monitor
