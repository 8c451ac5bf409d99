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
#include "fastalloc/bench/pressure.h"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <optional>

#include "fastalloc/backend/sim_backend.h"
#include "fastalloc/common/units.h"

namespace fastalloc::bench {

namespace {

namespace fs = std::filesystem;

class SimPressure final : public PressureHandle {
 public:
  explicit SimPressure(backend::SimBackend& sim) : sim_(sim) {}
  ~SimPressure() override { release(); }

  void add_file(const std::string& id, std::size_t bytes) {
    files_.push_back(id);
    sim_.load_file(id, bytes);
  }

  void fill_to(std::size_t target_free) {
    for (;;) {
      const auto s = sim_.memory_stats();
      if (s.available <= target_free) return;
      if (target_free < s.watermark_low) {
        throw PressureError("target " + format_size(target_free) + " is below the low watermark " +
                            format_size(s.watermark_low));
      }
      const std::size_t step = std::min(kPressureStep, round_down(s.available - target_free, sim_.page_size()));
      if (step == 0) return;
      auto c = sim_.map_chunk(step);
      if (!c) throw PressureError("simulated address space exhausted after " + format_size(anon_));
      chunks_.push_back(*c);
      anon_ += step;
      sim_.touch(c->range());
      if (sim_.memory_stats().available + step / 2 > s.available) {
        throw PressureError("available memory stopped falling at " + format_size(s.available));
      }
    }
  }

  void release() override {
    for (const auto& c : chunks_) sim_.unmap_chunk(c);
    chunks_.clear();
    anon_ = 0;
    for (const auto& f : files_) sim_.advise_release_file_cache(f, 0);
    files_.clear();
  }
  std::size_t anon_bytes() const override { return anon_; }
  std::vector<std::string> files() const override { return files_; }

 private:
  backend::SimBackend& sim_;
  std::vector<backend::ChunkHandle> chunks_;
  std::vector<std::string> files_;
  std::size_t anon_ = 0;
};

// --- real host ------------------------------------------------------------
// The child only uses system calls and fixed buffers: the parent may have
// other threads running when it forks.

std::optional<std::size_t> child_mem_available() {
  char buf[8192];
  int fd = ::open("/proc/meminfo", O_RDONLY | O_CLOEXEC);
  if (fd < 0) return std::nullopt;
  ssize_t n = ::read(fd, buf, sizeof buf - 1);
  ::close(fd);
  if (n <= 0) return std::nullopt;
  buf[n] = '\0';
  const char* p = std::strstr(buf, "MemAvailable:");
  if (p == nullptr) return std::nullopt;
  return static_cast<std::size_t>(std::strtoull(p + 13, nullptr, 10)) * 1024;
}

void child_read_file(const char* path, char* buf, std::size_t len) {
  int fd = ::open(path, O_RDONLY | O_CLOEXEC);
  if (fd < 0) return;
  while (::read(fd, buf, len) > 0) {
  }
  ::close(fd);
}

[[noreturn]] void child_main(int ready_fd, std::size_t target_free, const std::vector<std::string>& paths,
                             int reread_ms, int cpu) {
  if (cpu >= 0) {
    cpu_set_t set;
    CPU_ZERO(&set);
    CPU_SET(cpu, &set);
    ::sched_setaffinity(0, sizeof set, &set);
  }
  static char buf[1 << 20];
  for (const auto& p : paths) child_read_file(p.c_str(), buf, sizeof buf);
  for (;;) {
    auto avail = child_mem_available();
    if (!avail) {
      char e = 'M';
      (void)!::write(ready_fd, &e, 1);
      ::_exit(2);
    }
    if (*avail <= target_free) break;
    std::size_t step = std::min(kPressureStep, (*avail - target_free) & ~std::size_t{4095});
    if (step == 0) break;
    void* m = ::mmap(nullptr, step, PROT_READ | PROT_WRITE, MAP_PRIVATE | MAP_ANONYMOUS, -1, 0);
    if (m == MAP_FAILED) {
      char e = 'E';
      (void)!::write(ready_fd, &e, 1);
      ::_exit(3);
    }
    std::memset(m, 0x5a, step);
  }
  char r = 'R';
  (void)!::write(ready_fd, &r, 1);
  ::close(ready_fd);
  for (;;) {
    if (paths.empty()) {
      ::pause();
    } else {
      for (const auto& p : paths) child_read_file(p.c_str(), buf, sizeof buf);
      ::usleep(static_cast<useconds_t>(reread_ms) * 1000);
    }
  }
}

class RealPressure final : public PressureHandle {
 public:
  RealPressure(std::size_t target_free, std::vector<std::string> paths, bool own_files, int reread_ms)
      : paths_(std::move(paths)), own_files_(own_files) {
    int fds[2];
    if (::pipe2(fds, O_CLOEXEC) != 0) throw PressureError(std::string("pipe: ") + std::strerror(errno));
    const long ncpu = ::sysconf(_SC_NPROCESSORS_ONLN);
    const int child_cpu = ncpu > 1 ? static_cast<int>(ncpu - 1) : -1;
    const auto before = child_mem_available();
    pid_ = ::fork();
    if (pid_ < 0) {
      ::close(fds[0]);
      ::close(fds[1]);
      throw PressureError(std::string("fork: ") + std::strerror(errno));
    }
    if (pid_ == 0) {
      ::close(fds[0]);
      child_main(fds[1], target_free, paths_, reread_ms, child_cpu);
    }
    ::close(fds[1]);
    if (child_cpu > 0) {
      cpu_set_t set;
      CPU_ZERO(&set);
      for (int c = 0; c < child_cpu; ++c) CPU_SET(c, &set);
      ::sched_setaffinity(0, sizeof set, &set);
    }
    pollfd p{fds[0], POLLIN, 0};
    char status = 0;
    const int ready = ::poll(&p, 1, 300'000);
    if (ready == 1) (void)!::read(fds[0], &status, 1);
    ::close(fds[0]);
    if (status != 'R') {
      release();
      std::string why = status == 'E' ? "anonymous mapping failed"
                        : status == 'M' ? "/proc/meminfo unreadable"
                        : ready == 0 ? "timed out"
                                     : "generator died (OOM kill?)";
      throw PressureError("cannot reach " + format_size(target_free) + " available: " + why);
    }
    if (before) {
      const auto after = child_mem_available().value_or(*before);
      anon_ = *before > after ? *before - after : 0;
    }
  }
  ~RealPressure() override { release(); }

  void release() override {
    if (pid_ > 0) {
      ::kill(pid_, SIGKILL);
      int st = 0;
      while (::waitpid(pid_, &st, 0) < 0 && errno == EINTR) {
      }
      pid_ = -1;
    }
    for (const auto& p : paths_) {
      int fd = ::open(p.c_str(), O_RDONLY | O_CLOEXEC);
      if (fd >= 0) {
        ::posix_fadvise(fd, 0, 0, POSIX_FADV_DONTNEED);
        ::close(fd);
      }
      if (own_files_) {
        std::error_code ec;
        fs::remove(p, ec);
      }
    }
    paths_.clear();
  }
  std::size_t anon_bytes() const override { return anon_; }
  std::vector<std::string> files() const override { return paths_; }

 private:
  pid_t pid_ = -1;
  std::vector<std::string> paths_;
  bool own_files_;
  std::size_t anon_ = 0;
};

void write_scratch_file(const std::string& path, std::size_t bytes) {
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) throw PressureError("create " + path + ": " + std::strerror(errno));
  std::vector<char> block(std::size_t{1} << 20, 'f');
  std::size_t done = 0;
  while (done < bytes) {
    const std::size_t n = std::min(block.size(), bytes - done);
    ssize_t w = ::write(fd, block.data(), n);
    if (w < 0 && errno == EINTR) continue;
    if (w <= 0) {
      const int err = errno;
      ::close(fd);
      ::unlink(path.c_str());
      throw PressureError("write " + path + ": " + std::strerror(err));
    }
    done += static_cast<std::size_t>(w);
  }
  ::close(fd);
}

}  // namespace

std::vector<std::size_t> split_sizes(std::size_t total, std::size_t piece) {
  std::vector<std::size_t> out;
  if (piece == 0) throw std::invalid_argument("piece size must be positive");
  while (total > 0) {
    out.push_back(std::min(piece, total));
    total -= out.back();
  }
  return out;
}

std::unique_ptr<PressureHandle> gen_anon_pressure(backend::Backend& backend, std::size_t target_free) {
  return gen_file_pressure(backend, 0, target_free);
}

std::unique_ptr<PressureHandle> gen_file_pressure(backend::Backend& backend, std::size_t file_bytes,
                                                  std::size_t target_free, const FilePressureOptions& options) {
  std::vector<std::size_t> sizes = options.sizes;
  if (sizes.empty() && file_bytes > 0) sizes = split_sizes(file_bytes, options.piece);
  if (auto* sim = dynamic_cast<backend::SimBackend*>(&backend)) {
    auto h = std::make_unique<SimPressure>(*sim);
    for (std::size_t i = 0; i < sizes.size(); ++i) h->add_file("pressure-file-" + std::to_string(i), sizes[i]);
    h->fill_to(target_free);
    return h;
  }
  std::vector<std::string> paths;
  if (!sizes.empty()) {
    std::error_code ec;
    fs::create_directories(options.scratch_dir, ec);
    if (ec) throw PressureError("scratch dir " + options.scratch_dir + ": " + ec.message());
    const auto space = fs::space(options.scratch_dir, ec);
    std::size_t need = 0;
    for (auto s : sizes) need += s;
    if (!ec && space.available < need) {
      throw PressureError("scratch dir has " + format_size(space.available) + ", need " + format_size(need));
    }
    try {
      for (std::size_t i = 0; i < sizes.size(); ++i) {
        paths.push_back((fs::path(options.scratch_dir) / ("pressure-file-" + std::to_string(i))).string());
        write_scratch_file(paths.back(), sizes[i]);
      }
    } catch (...) {
      for (const auto& p : paths) fs::remove(p, ec);
      throw;
    }
  }
  return std::make_unique<RealPressure>(target_free, std::move(paths), true, options.reread_ms);
}

}  // namespace fastalloc::bench
