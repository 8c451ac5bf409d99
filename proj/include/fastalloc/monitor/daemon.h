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
// Monitor daemon: owns the service registry, answers control commands on a
// local socket and runs a reclaim pass every poll period.
//
// Commands (one per line): REG-LC <pid>, REG-BATCH <pid>, UNREG <pid>, STAT.
// Replies: `OK`, `OK <stat fields>` or `ERR <reason>`.

#pragma once

#include <atomic>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "fastalloc/backend/backend.h"
#include "fastalloc/monitor/batch_files.h"
#include "fastalloc/monitor/reclaim.h"
#include "fastalloc/monitor/registry.h"

namespace fastalloc::monitor {

struct DaemonConfig {
  ReclaimConfig reclaim;
  std::string registry_path;
  std::string socket_path;    // empty: no control socket
  std::string advisory_log;   // empty: advisories are not written out
};

struct DaemonCounters {
  std::uint64_t passes = 0;
  std::uint64_t advisories = 0;
  std::uint64_t failed_advisories = 0;
  std::uint64_t pruned_pids = 0;
};

class MonitorDaemon {
 public:
  // Loads an existing registry file so a restarted daemon keeps its state.
  MonitorDaemon(DaemonConfig config, backend::Backend& backend, BatchFileSource& source);
  ~MonitorDaemon();
  MonitorDaemon(const MonitorDaemon&) = delete;
  MonitorDaemon& operator=(const MonitorDaemon&) = delete;

  std::string handle_command(std::string_view line);

  // Scan, prune exited batch pids, reclaim. Appends to the advisory log.
  std::vector<Advisory> run_pass();

  // Starts the control listener (when a socket path is set) and the
  // periodic reclaim loop.
  void start();
  void stop();

  ServiceRegistry registry() const;
  DaemonCounters counters() const;

 private:
  void persist_locked();
  void control_loop(std::stop_token stop);
  void reclaim_loop(std::stop_token stop);
  void serve_client(int fd, std::stop_token stop);

  DaemonConfig config_;
  backend::Backend& backend_;
  BatchFileSource& source_;

  mutable std::mutex mu_;  // registry, counters, log
  ServiceRegistry registry_;
  DaemonCounters counters_;
  std::ofstream log_;

  int listen_fd_ = -1;
  std::jthread control_thread_;
  std::jthread reclaim_thread_;
};

// Connects to a daemon socket, sends one command and returns the reply
// line. Throws std::system_error when the daemon is unreachable.
std::string send_control_command(const std::string& socket_path, std::string_view command);

}  // namespace fastalloc::monitor
