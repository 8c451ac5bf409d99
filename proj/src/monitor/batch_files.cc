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
#include "fastalloc/monitor/batch_files.h"

#include <sys/stat.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "fastalloc/backend/os_backend.h"
#include "fastalloc/backend/sim_backend.h"
#include "fastalloc/common/kv_config.h"
#include "fastalloc/common/units.h"

namespace fastalloc::monitor {

namespace fs = std::filesystem;

std::optional<std::vector<BatchFileEntry>> ProcFdSource::files_of(pid_t pid) {
  const fs::path fd_dir = fs::path(proc_root_) / std::to_string(pid) / "fd";
  std::error_code ec;
  if (!fs::exists(fs::path(proc_root_) / std::to_string(pid), ec)) return std::nullopt;
  std::vector<BatchFileEntry> out;
  fs::directory_iterator it(fd_dir, ec);
  if (ec) {
    if (!fs::exists(fs::path(proc_root_) / std::to_string(pid), ec)) return std::nullopt;
    return out;
  }
  std::set<std::string> seen;
  for (; it != fs::directory_iterator(); it.increment(ec)) {
    if (ec) break;
    std::error_code link_ec;
    fs::path target = fs::read_symlink(it->path(), link_ec);
    if (link_ec || !target.is_absolute()) continue;
    struct stat st {};
    if (::stat(target.c_str(), &st) != 0 || !S_ISREG(st.st_mode)) continue;
    if (!seen.insert(target.string()).second) continue;
    BatchFileEntry e;
    e.owner = pid;
    e.file = target.string();
    e.size = static_cast<std::size_t>(st.st_size);
    e.cached = std::min(e.size, backend::file_cached_bytes(e.file).value_or(e.size));
    out.push_back(std::move(e));
  }
  return out;
}

ManifestSource::ManifestSource(std::vector<BatchFileEntry> entries, const backend::SimBackend* sim)
    : entries_(std::move(entries)), sim_(sim) {}

ManifestSource ManifestSource::parse(const std::string& text, const backend::SimBackend* sim) {
  std::vector<BatchFileEntry> entries;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    long pid = 0;
    std::string file, size_text, extra;
    if (!(fields >> pid)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      throw ConfigError("manifest line " + std::to_string(lineno) + ": bad pid");
    }
    if (!(fields >> file >> size_text) || (fields >> extra) || pid <= 0) {
      throw ConfigError("manifest line " + std::to_string(lineno) + ": expected `<pid> <file> <size>`");
    }
    auto size = parse_size(size_text);
    if (!size) throw ConfigError("manifest line " + std::to_string(lineno) + ": bad size " + size_text);
    entries.push_back({static_cast<pid_t>(pid), file, *size, *size});
  }
  return ManifestSource(std::move(entries), sim);
}

ManifestSource ManifestSource::load(const std::string& path, const backend::SimBackend* sim) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read manifest " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), sim);
}

std::optional<std::vector<BatchFileEntry>> ManifestSource::files_of(pid_t pid) {
  if (exited_.count(pid) != 0) return std::nullopt;
  std::vector<BatchFileEntry> out;
  for (const auto& e : entries_) {
    if (e.owner != pid) continue;
    BatchFileEntry copy = e;
    if (sim_ != nullptr) copy.cached = std::min(copy.size, sim_->cached_bytes(copy.file));
    out.push_back(std::move(copy));
  }
  return out;
}

void ManifestSource::mark_exited(pid_t pid) { exited_[pid] = true; }

ScanResult scan_batch_files(const ServiceRegistry& registry, BatchFileSource& source) {
  ScanResult result;
  std::set<std::string> lc_files;
  for (pid_t pid : registry.latency_critical()) {
    if (auto files = source.files_of(pid)) {
      for (const auto& e : *files) lc_files.insert(e.file);
    }
  }
  std::set<std::string> seen;
  for (pid_t pid : registry.batch()) {
    auto files = source.files_of(pid);
    if (!files) {
      result.exited.push_back(pid);
      continue;
    }
    for (auto& e : *files) {
      if (lc_files.count(e.file) != 0 || !seen.insert(e.file).second) continue;
      result.entries.push_back(std::move(e));
    }
  }
  return result;
}

}  // namespace fastalloc::monitor
