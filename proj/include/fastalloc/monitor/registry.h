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
// Registry of latency-critical services and batch jobs, persisted to a
// shared text file (`<pid> <LC|BATCH>` per line) under flock.

#pragma once

#include <sys/types.h>

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "fastalloc/alloc/registry_probe.h"

namespace fastalloc::monitor {

enum class ServiceKind { kLatencyCritical, kBatch };

class RegistryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ServiceRegistry {
 public:
  // Idempotent. Throws RegistryError when the pid is in the other set or
  // is not positive.
  void register_pid(pid_t pid, ServiceKind kind);
  // Returns false when the pid was not registered.
  bool unregister(pid_t pid);

  // True for latency-critical pids only.
  bool is_registered(pid_t pid) const { return latency_critical_.count(pid) != 0; }
  bool is_batch(pid_t pid) const { return batch_.count(pid) != 0; }

  const std::set<pid_t>& latency_critical() const { return latency_critical_; }
  const std::set<pid_t>& batch() const { return batch_; }
  bool empty() const { return latency_critical_.empty() && batch_.empty(); }

  std::string serialize() const;
  // Throws RegistryError on malformed lines or overlapping sets.
  static ServiceRegistry parse(const std::string& text);

  // Rewrites the file in place under an exclusive lock.
  void save(const std::string& path) const;
  // Missing file reads as an empty registry. Takes a shared lock.
  static ServiceRegistry load(const std::string& path);

  friend bool operator==(const ServiceRegistry&, const ServiceRegistry&) = default;

 private:
  std::set<pid_t> latency_critical_;
  std::set<pid_t> batch_;
};

// Allocator-side probe: re-reads the registry file on every call.
class FileRegistryProbe final : public alloc::RegistryProbe {
 public:
  explicit FileRegistryProbe(std::string path) : path_(std::move(path)) {}
  bool is_registered(pid_t pid) const override;

 private:
  std::string path_;
};

}  // namespace fastalloc::monitor
