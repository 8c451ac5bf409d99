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
#include "fastalloc/monitor/registry.h"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <sstream>
#include <system_error>

namespace fastalloc::monitor {

namespace {

class LockedFd {
 public:
  LockedFd(const std::string& path, int flags, int lock_op) {
    fd_ = ::open(path.c_str(), flags | O_CLOEXEC, 0644);
    if (fd_ < 0) return;
    while (::flock(fd_, lock_op) != 0) {
      if (errno != EINTR) throw std::system_error(errno, std::generic_category(), "flock " + path);
    }
  }
  ~LockedFd() {
    if (fd_ >= 0) ::close(fd_);  // drops the lock
  }
  LockedFd(const LockedFd&) = delete;
  LockedFd& operator=(const LockedFd&) = delete;
  int fd() const { return fd_; }

 private:
  int fd_ = -1;
};

std::string read_all(int fd) {
  std::string out;
  char buf[4096];
  for (;;) {
    ssize_t n = ::read(fd, buf, sizeof buf);
    if (n < 0 && errno == EINTR) continue;
    if (n < 0) throw std::system_error(errno, std::generic_category(), "registry read");
    if (n == 0) break;
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out;
}

}  // namespace

void ServiceRegistry::register_pid(pid_t pid, ServiceKind kind) {
  if (pid <= 0) throw RegistryError("invalid pid " + std::to_string(pid));
  auto& mine = kind == ServiceKind::kLatencyCritical ? latency_critical_ : batch_;
  const auto& other = kind == ServiceKind::kLatencyCritical ? batch_ : latency_critical_;
  if (other.count(pid) != 0) {
    throw RegistryError("pid " + std::to_string(pid) + " already registered as " +
                        (kind == ServiceKind::kLatencyCritical ? "BATCH" : "LC"));
  }
  mine.insert(pid);
}

bool ServiceRegistry::unregister(pid_t pid) { return latency_critical_.erase(pid) + batch_.erase(pid) != 0; }

std::string ServiceRegistry::serialize() const {
  std::string out;
  for (pid_t p : latency_critical_) out += std::to_string(p) + " LC\n";
  for (pid_t p : batch_) out += std::to_string(p) + " BATCH\n";
  return out;
}

ServiceRegistry ServiceRegistry::parse(const std::string& text) {
  ServiceRegistry r;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream fields(line);
    std::string pid_text, kind_text, extra;
    if (!(fields >> pid_text)) continue;
    if (pid_text[0] == '#') continue;
    if (!(fields >> kind_text) || (fields >> extra)) {
      throw RegistryError("registry line " + std::to_string(lineno) + ": expected `<pid> <LC|BATCH>`");
    }
    pid_t pid = 0;
    auto [ptr, ec] = std::from_chars(pid_text.data(), pid_text.data() + pid_text.size(), pid);
    if (ec != std::errc{} || ptr != pid_text.data() + pid_text.size()) {
      throw RegistryError("registry line " + std::to_string(lineno) + ": bad pid");
    }
    ServiceKind kind;
    if (kind_text == "LC") {
      kind = ServiceKind::kLatencyCritical;
    } else if (kind_text == "BATCH") {
      kind = ServiceKind::kBatch;
    } else {
      throw RegistryError("registry line " + std::to_string(lineno) + ": unknown kind " + kind_text);
    }
    r.register_pid(pid, kind);
  }
  return r;
}

void ServiceRegistry::save(const std::string& path) const {
  LockedFd f(path, O_RDWR | O_CREAT, LOCK_EX);
  if (f.fd() < 0) throw std::system_error(errno, std::generic_category(), "open " + path);
  const std::string text = serialize();
  if (::ftruncate(f.fd(), 0) != 0) throw std::system_error(errno, std::generic_category(), "truncate " + path);
  std::size_t done = 0;
  while (done < text.size()) {
    ssize_t n = ::pwrite(f.fd(), text.data() + done, text.size() - done, static_cast<off_t>(done));
    if (n < 0 && errno == EINTR) continue;
    if (n < 0) throw std::system_error(errno, std::generic_category(), "write " + path);
    done += static_cast<std::size_t>(n);
  }
}

ServiceRegistry ServiceRegistry::load(const std::string& path) {
  LockedFd f(path, O_RDONLY, LOCK_SH);
  if (f.fd() < 0) {
    if (errno == ENOENT) return {};
    throw std::system_error(errno, std::generic_category(), "open " + path);
  }
  return parse(read_all(f.fd()));
}

bool FileRegistryProbe::is_registered(pid_t pid) const { return ServiceRegistry::load(path_).is_registered(pid); }

}  // namespace fastalloc::monitor
