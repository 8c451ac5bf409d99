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
// memmond: file cache monitor for co-located batch jobs.
//
//   memmond --registry-path /run/fastalloc/registry --socket /run/fastalloc/ctl
//   memmond --ctl REG-LC --pid 1234 --socket /run/fastalloc/ctl
//   memmond --once --sim-manifest jobs.txt --sim-anon 300MB

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>

#include "fastalloc/backend/os_backend.h"
#include "fastalloc/backend/sim_backend.h"
#include "fastalloc/bench/pressure.h"
#include "fastalloc/common/units.h"
#include "fastalloc/monitor/batch_files.h"
#include "fastalloc/monitor/daemon.h"

using namespace fastalloc;
using namespace fastalloc::monitor;

namespace {

void print_pass(const std::vector<Advisory>& advisories, backend::Backend& b) {
  for (const auto& a : advisories) {
    std::printf("advise %s %s usage %.4f -> %.4f%s%s\n", a.file.c_str(), format_size(a.bytes).c_str(),
                a.usage_before, a.usage_after, a.ok ? "" : " failed: ", a.ok ? "" : a.error.c_str());
  }
  std::printf("usage %.4f after pass, %zu advisories\n", b.memory_stats().occupancy(), advisories.size());
}

int wait_for_signal() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  int sig = 0;
  sigwait(&set, &sig);
  return sig;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Releases page cache held by batch jobs when memory usage is high"};

  DaemonConfig config;
  config.registry_path = "/tmp/fastalloc-registry";
  double adv_thr = config.reclaim.adv_thr;
  long poll_ms = config.reclaim.poll_period.count();
  std::string manifest, sim_config, sim_anon, ctl;
  pid_t ctl_pid = 0;
  bool once = false;

  app.add_option("--adv-thr", adv_thr, "Usage fraction above which cache is released")->capture_default_str();
  app.add_option("--poll-ms", poll_ms, "Reclaim period in milliseconds")->capture_default_str();
  app.add_option("--registry-path", config.registry_path, "Shared registry file")->capture_default_str();
  app.add_option("--socket", config.socket_path, "Control socket path");
  app.add_option("--advisory-log", config.advisory_log, "CSV log of issued advisories");
  app.add_option("--sim-manifest", manifest, "Run against the simulator with this file manifest");
  app.add_option("--sim-config", sim_config, "Simulator config file");
  app.add_option("--sim-anon", sim_anon, "Simulator: anonymous pressure down to this much available");
  app.add_flag("--once", once, "Run a single reclaim pass and exit");
  app.add_option("--ctl", ctl, "Client mode: send REG-LC, REG-BATCH, UNREG or STAT to --socket")
      ->check(CLI::IsMember({"REG-LC", "REG-BATCH", "UNREG", "STAT"}));
  app.add_option("--pid", ctl_pid, "Pid for --ctl");
  CLI11_PARSE(app, argc, argv);

  try {
    if (!ctl.empty()) {
      if (config.socket_path.empty()) throw std::invalid_argument("--ctl needs --socket");
      std::string command = ctl;
      if (ctl != "STAT") {
        if (ctl_pid <= 0) throw std::invalid_argument("--ctl " + ctl + " needs --pid");
        command += " " + std::to_string(ctl_pid);
      }
      const std::string reply = send_control_command(config.socket_path, command);
      std::cout << reply << '\n';
      return reply.rfind("OK", 0) == 0 ? 0 : 1;
    }

    config.reclaim.adv_thr = adv_thr;
    config.reclaim.poll_period = std::chrono::milliseconds(poll_ms);
    config.reclaim.validate();

    std::unique_ptr<backend::Backend> backend;
    std::unique_ptr<BatchFileSource> source;
    std::unique_ptr<bench::PressureHandle> pressure;
    std::set<pid_t> manifest_pids;
    if (!manifest.empty()) {
      backend::SimConfig c = sim_config.empty() ? backend::SimConfig{} : backend::SimConfig::load(sim_config);
      c.event_log = false;
      auto sim = std::make_unique<backend::SimBackend>(c);
      auto m = std::make_unique<ManifestSource>(ManifestSource::load(manifest, sim.get()));
      for (const auto& e : m->entries()) {
        sim->load_file(e.file, e.size);
        manifest_pids.insert(e.owner);
      }
      if (!sim_anon.empty()) {
        auto target = parse_size(sim_anon);
        if (!target) throw std::invalid_argument("bad --sim-anon '" + sim_anon + "'");
        pressure = bench::gen_anon_pressure(*sim, *target);
      }
      backend = std::move(sim);
      source = std::move(m);
    } else {
      backend = std::make_unique<backend::OsBackend>();
      source = std::make_unique<ProcFdSource>();
    }

    MonitorDaemon daemon(config, *backend, *source);
    // Manifest pids nobody registered yet are treated as batch jobs.
    const auto registry = daemon.registry();
    for (pid_t pid : manifest_pids) {
      if (!registry.is_registered(pid) && !registry.is_batch(pid)) {
        daemon.handle_command("REG-BATCH " + std::to_string(pid));
      }
    }
    std::printf("usage %.4f, threshold %.2f\n", backend->memory_stats().occupancy(), config.reclaim.adv_thr);

    if (once) {
      print_pass(daemon.run_pass(), *backend);
      return 0;
    }

    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    daemon.start();
    const int sig = wait_for_signal();
    daemon.stop();
    const auto c = daemon.counters();
    std::printf("signal %d: %llu passes, %llu advisories (%llu failed), %llu pids pruned\n", sig,
                static_cast<unsigned long long>(c.passes), static_cast<unsigned long long>(c.advisories),
                static_cast<unsigned long long>(c.failed_advisories), static_cast<unsigned long long>(c.pruned_pids));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "memmond: %s\n", e.what());
    return 2;
  }
  return 0;
}
