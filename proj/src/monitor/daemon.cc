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
#include "fastalloc/monitor/daemon.h"

#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <iomanip>
#include <optional>
#include <sstream>
#include <system_error>

namespace fastalloc::monitor {

namespace {

constexpr int kPollMs = 50;

sockaddr_un socket_address(const std::string& path) {
  sockaddr_un addr{};
  addr.sun_family = AF_UNIX;
  if (path.size() >= sizeof addr.sun_path) throw std::invalid_argument("socket path too long: " + path);
  std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
  return addr;
}

bool write_all(int fd, std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

std::optional<pid_t> parse_pid(std::string_view text) {
  pid_t pid = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), pid);
  if (ec != std::errc{} || ptr != text.data() + text.size() || pid <= 0) return std::nullopt;
  return pid;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n')) {
    s.remove_suffix(1);
  }
  return s;
}

}  // namespace

MonitorDaemon::MonitorDaemon(DaemonConfig config, backend::Backend& backend, BatchFileSource& source)
    : config_(std::move(config)), backend_(backend), source_(source) {
  config_.reclaim.validate();
  if (!config_.registry_path.empty()) registry_ = ServiceRegistry::load(config_.registry_path);
  if (!config_.advisory_log.empty()) {
    const bool fresh = !std::ifstream(config_.advisory_log).good();
    log_.open(config_.advisory_log, std::ios::app);
    if (!log_) throw std::system_error(errno, std::generic_category(), "open " + config_.advisory_log);
    if (fresh) {
      write_advisory_header(log_);
      log_.flush();
    }
  }
}

MonitorDaemon::~MonitorDaemon() { stop(); }

void MonitorDaemon::persist_locked() {
  if (!config_.registry_path.empty()) registry_.save(config_.registry_path);
}

std::string MonitorDaemon::handle_command(std::string_view line) {
  line = trim(line);
  const auto space = line.find(' ');
  const std::string_view verb = line.substr(0, space);
  const std::string_view arg = space == std::string_view::npos ? std::string_view{} : trim(line.substr(space + 1));

  std::lock_guard lock(mu_);
  if (verb == "STAT") {
    if (!arg.empty()) return "ERR STAT takes no argument";
    double usage = 0;
    try {
      usage = backend_.memory_stats().occupancy();
    } catch (const std::exception& e) {
      return std::string("ERR stats unavailable: ") + e.what();
    }
    std::ostringstream out;
    out << "OK lc=" << registry_.latency_critical().size() << " batch=" << registry_.batch().size()
        << " usage=" << std::fixed << std::setprecision(4) << usage << " passes=" << counters_.passes
        << " advisories=" << counters_.advisories;
    return out.str();
  }
  if (verb != "REG-LC" && verb != "REG-BATCH" && verb != "UNREG") {
    return "ERR unknown command";
  }
  auto pid = parse_pid(arg);
  if (!pid) return "ERR bad pid";
  try {
    if (verb == "UNREG") {
      if (!registry_.unregister(*pid)) return "ERR pid not registered";
    } else {
      registry_.register_pid(*pid, verb == "REG-LC" ? ServiceKind::kLatencyCritical : ServiceKind::kBatch);
    }
    persist_locked();
  } catch (const std::exception& e) {
    return std::string("ERR ") + e.what();
  }
  return "OK";
}

std::vector<Advisory> MonitorDaemon::run_pass() {
  std::lock_guard lock(mu_);
  ScanResult scan = scan_batch_files(registry_, source_);
  if (!scan.exited.empty()) {
    for (pid_t pid : scan.exited) registry_.unregister(pid);
    counters_.pruned_pids += scan.exited.size();
    try {
      persist_locked();
    } catch (const std::exception& e) {
      std::fprintf(stderr, "memmond: registry save failed: %s\n", e.what());
    }
  }
  auto advisories = reclaim_pass(backend_, std::move(scan.entries), config_.reclaim, [](const Advisory& a) {
    std::fprintf(stderr, "memmond: advisory for %s failed: %s\n", a.file.c_str(), a.error.c_str());
  });
  ++counters_.passes;
  counters_.advisories += advisories.size();
  for (const auto& a : advisories) counters_.failed_advisories += a.ok ? 0 : 1;
  if (log_.is_open() && !advisories.empty()) {
    write_advisory_rows(log_, advisories);
    log_.flush();
  }
  return advisories;
}

void MonitorDaemon::start() {
  if (reclaim_thread_.joinable()) return;
  if (!config_.socket_path.empty()) {
    const sockaddr_un addr = socket_address(config_.socket_path);
    listen_fd_ = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (listen_fd_ < 0) throw std::system_error(errno, std::generic_category(), "socket");
    ::unlink(config_.socket_path.c_str());
    if (::bind(listen_fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0 ||
        ::listen(listen_fd_, 16) != 0) {
      const int err = errno;
      ::close(listen_fd_);
      listen_fd_ = -1;
      throw std::system_error(err, std::generic_category(), "bind " + config_.socket_path);
    }
    control_thread_ = std::jthread([this](std::stop_token st) { control_loop(st); });
  }
  reclaim_thread_ = std::jthread([this](std::stop_token st) { reclaim_loop(st); });
}

void MonitorDaemon::stop() {
  if (control_thread_.joinable()) {
    control_thread_.request_stop();
    control_thread_.join();
  }
  if (reclaim_thread_.joinable()) {
    reclaim_thread_.request_stop();
    reclaim_thread_.join();
  }
  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
    ::unlink(config_.socket_path.c_str());
  }
}

void MonitorDaemon::control_loop(std::stop_token stop) {
  while (!stop.stop_requested()) {
    pollfd p{listen_fd_, POLLIN, 0};
    int n = ::poll(&p, 1, kPollMs);
    if (n <= 0) continue;
    int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd < 0) continue;
    serve_client(fd, stop);
    ::close(fd);
  }
}

void MonitorDaemon::serve_client(int fd, std::stop_token stop) {
  std::string pending;
  char buf[512];
  while (!stop.stop_requested()) {
    pollfd p{fd, POLLIN, 0};
    int n = ::poll(&p, 1, kPollMs);
    if (n < 0 && errno != EINTR) return;
    if (n <= 0) continue;
    ssize_t got = ::recv(fd, buf, sizeof buf, 0);
    if (got < 0 && errno == EINTR) continue;
    if (got <= 0) return;
    pending.append(buf, static_cast<std::size_t>(got));
    std::size_t nl;
    while ((nl = pending.find('\n')) != std::string::npos) {
      std::string line = pending.substr(0, nl);
      pending.erase(0, nl + 1);
      if (trim(line).empty()) continue;
      if (!write_all(fd, handle_command(line) + "\n")) return;
    }
    if (pending.size() > 4096) {
      write_all(fd, "ERR line too long\n");
      return;
    }
  }
}

void MonitorDaemon::reclaim_loop(std::stop_token stop) {
  std::mutex m;
  std::condition_variable_any cv;
  auto next = std::chrono::steady_clock::now();
  while (!stop.stop_requested()) {
    try {
      run_pass();
    } catch (const std::exception& e) {
      std::fprintf(stderr, "memmond: reclaim pass failed: %s\n", e.what());
    }
    next += config_.reclaim.poll_period;
    const auto now = std::chrono::steady_clock::now();
    if (next < now) next = now;
    std::unique_lock lock(m);
    cv.wait_until(lock, stop, next, [] { return false; });
  }
}

ServiceRegistry MonitorDaemon::registry() const {
  std::lock_guard lock(mu_);
  return registry_;
}

DaemonCounters MonitorDaemon::counters() const {
  std::lock_guard lock(mu_);
  return counters_;
}

std::string send_control_command(const std::string& socket_path, std::string_view command) {
  const sockaddr_un addr = socket_address(socket_path);
  int fd = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw std::system_error(errno, std::generic_category(), "socket");
  if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    const int err = errno;
    ::close(fd);
    throw std::system_error(err, std::generic_category(), "connect " + socket_path);
  }
  std::string line(command);
  line += '\n';
  std::string reply;
  if (write_all(fd, line)) {
    char buf[256];
    while (reply.find('\n') == std::string::npos) {
      ssize_t n = ::recv(fd, buf, sizeof buf, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      reply.append(buf, static_cast<std::size_t>(n));
    }
  }
  ::close(fd);
  if (auto nl = reply.find('\n'); nl != std::string::npos) reply.resize(nl);
  return reply;
}

}  // namespace fastalloc::monitor
