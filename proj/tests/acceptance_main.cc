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
// Acceptance checks. Prints one [PASS]/[FAIL] line per criterion and exits
// non-zero when a gating criterion fails.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fastalloc/alloc/heap_arena.h"
#include "fastalloc/alloc/size_class.h"
#include "fastalloc/backend/os_backend.h"
#include "fastalloc/backend/sim_backend.h"
#include "fastalloc/bench/pressure.h"
#include "fastalloc/bench/report.h"
#include "fastalloc/bench/sweep.h"
#include "fastalloc/bench/workload.h"
#include "fastalloc/common/units.h"
#include "fastalloc/monitor/batch_files.h"
#include "fastalloc/monitor/daemon.h"
#include "support/sim_fixtures.h"
#include "support/soundness.h"

using namespace fastalloc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const char* name, bool gating, const std::function<Outcome()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = check();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("[%s] %s%s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", name, gating ? "" : " (informational)",
              o.detail.c_str(), secs);
  std::fflush(stdout);
  if (gating && !o.pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome bucket_formula() {
  const auto start = std::chrono::steady_clock::now();
  std::size_t mismatches = 0, checked = 0;
  for (std::size_t s = 128 * kKiB; s <= 4 * kMiB; s += kKiB, ++checked) {
    const double direct = std::min(std::floor(static_cast<double>(s) / static_cast<double>(128 * kKiB)), 8.0);
    mismatches += alloc::bucket_index(s, 128 * kKiB, 8) != static_cast<std::size_t>(direct);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {mismatches == 0 && secs < 1.0, fmt("%zu sizes, %zu mismatches, %.4f s", checked, mismatches, secs)};
}

testing::SoundnessResult soundness_main;
testing::SoundnessResult soundness_alt;

Outcome soundness() {
  const auto start = std::chrono::steady_clock::now();
  soundness_main = testing::run_soundness(20261018, 100'000);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const auto& r = soundness_main;
  const bool ok = r.overlaps == 0 && r.corruptions == 0 && r.null_returns == 0 && r.arena_empty_after_free &&
                  r.large_live_after_free == 0 && r.arena_invariants && r.pool_invariants && r.backend_restored() &&
                  secs < 60.0;
  return {ok, fmt("%zu ops, %zu rounds, overlaps %zu, corruptions %zu, available %zu/%zu after destroy, resident %zu%s%s",
                  r.operations, r.rounds, r.overlaps, r.corruptions, r.available_after_destroy, r.capacity,
                  r.resident_after_destroy, r.first_problem.empty() ? "" : ", first problem: ",
                  r.first_problem.c_str())};
}

Outcome gradual_reservation() {
  backend::OsBackend b;
  if (b.page_size() != 4096) return {false, "needs 4 KB pages"};
  alloc::HeapArena arena(b, kGiB);
  arena.set_managed(true);
  // Leave exactly 2 KB of top chunk.
  if (arena.allocate(3 * kKiB) == nullptr) return {false, "setup allocation failed"};
  const std::size_t rest = arena.top_free();
  if (rest <= 2 * kKiB || arena.allocate(rest - 2 * kKiB) == nullptr || arena.top_free() != 2 * kKiB) {
    return {false, "could not shape a 2 KB top"};
  }
  arena.reset_max_wait_ops();
  arena.set_acquire_trace(true);

  std::atomic<bool> done{false};
  std::atomic<std::uint64_t> round_start{0}, round_end{0};
  alloc::RoundReport r;
  std::thread round([&] {
    round_start = b.op_count();
    alloc::heap_round(arena, alloc::Thresholds{10 * kMiB, 20 * kMiB, 40 * kMiB, 4 * kKiB}, r);
    round_end = b.op_count();
    done = true;
  });
  std::size_t competitor = 0;
  while (!done) {
    if (arena.allocate(16) != nullptr) ++competitor;
    std::this_thread::yield();
  }
  round.join();

  std::size_t grows = 0, bad = 0;
  for (const auto& a : r.actions) {
    if (a.action == "grow") {
      ++grows;
      bad += a.bytes != 4 * kKiB;
    }
  }
  std::size_t inside = 0;
  for (auto c : arena.acquire_trace()) inside += c > round_start && c < round_end;
  const std::size_t expected = ceil_div(20 * kMiB - 2 * kKiB, 4 * kKiB);
  const bool ok = grows == expected && bad == 0 && arena.max_wait_ops() <= 2 && inside > 0;
  return {ok, fmt("%zu grows (expected %zu), %zu not 4 KB, competitor max wait %llu backend calls, "
                  "%zu of %zu competitor acquisitions inside the round",
                  grows, expected, bad, static_cast<unsigned long long>(arena.max_wait_ops()), inside, competitor)};
}

Outcome bands() {
  soundness_alt = testing::run_soundness(7, 30'000);
  std::size_t violations = 0, heap_checked = 0, pool_checked = 0;
  for (const auto* r : {&soundness_main, &soundness_alt}) {
    violations += r->heap_band_violations + r->pool_band_violations;
    heap_checked += r->heap_bands_checked;
    pool_checked += r->pool_bands_checked;
  }
  return {violations == 0 && heap_checked > 0 && pool_checked > 0,
          fmt("%zu heap and %zu pool post-round checks, %zu violations", heap_checked, pool_checked, violations)};
}

bench::LatencySeries pressured_run(std::size_t size, std::size_t total, bench::Mode mode,
                                   const bench::MicroOptions& options = {}) {
  backend::SimBackend sim(testing::pressure_sim_config());
  auto p = bench::gen_anon_pressure(sim, testing::kPressureFree);
  bench::WorkloadSpec s;
  s.request_size = size;
  s.total_bytes = total;
  s.mode = mode;
  return bench::run_micro(s, sim, options);
}

Outcome latency_trend() {
  const auto base = pressured_run(256 * kKiB, kGiB, bench::Mode::kBaseline);
  const auto hermes = pressured_run(256 * kKiB, kGiB, bench::Mode::kHermes);
  const auto base2 = pressured_run(256 * kKiB, kGiB, bench::Mode::kBaseline);
  const auto hermes2 = pressured_run(256 * kKiB, kGiB, bench::Mode::kHermes);
  const auto sb = bench::summarize(base.latency_us);
  const auto sh = bench::summarize(hermes.latency_us);
  const double mean_red = 100.0 * (sb.mean - sh.mean) / sb.mean;
  const double p99_red = 100.0 * (sb.at(99) - sh.at(99)) / sb.at(99);
  const bool deterministic = base.latency_us == base2.latency_us && hermes.latency_us == hermes2.latency_us;
  const bool ok = !base.partial && !hermes.partial && mean_red >= 40 && p99_red >= 50 && deterministic;
  return {ok, fmt("mean %.1f -> %.1f us (-%.1f%%), p99 %.1f -> %.1f us (-%.1f%%), reruns %s, management busy %.2f",
                  sb.mean, sh.mean, mean_red, sb.at(99), sh.at(99), p99_red,
                  deterministic ? "identical" : "DIFFER", hermes.management_busy())};
}

// Upper bound at every round boundary and the steady-state reserved level
// against rsv_factor x demand, for the heap (1 KB) and the pool (256 KB).
Outcome reservation_overhead() {
  const double factor = alloc::ReservationPolicy{}.rsv_factor;
  std::string detail;
  bool ok = true;
  for (bool small : {true, false}) {
    const auto series = pressured_run(small ? kKiB : 256 * kKiB, kGiB, bench::Mode::kHermes);
    std::size_t over = 0, steady = 0;
    std::size_t max_held = 0;
    double sum_ratio = 0;
    for (std::size_t i = 0; i < series.rounds.size(); ++i) {
      const auto& t = series.rounds[i];
      const auto& th = small ? t.heap : t.mmap;
      const std::size_t held = small ? t.heap_top_after : t.pool_total_after;
      max_held = std::max(max_held, held);
      over += held > th.trim_thr + th.mem_chunk;
      const bool ran = small ? t.heap_reservation_ran : t.pool_reservation_ran;
      const std::size_t demand = small ? t.small_demand : t.large_demand;
      // Skip warm-up and the interval cut short by the end of the run.
      if (!ran || i < 5 || i + 1 == series.rounds.size() || demand == 0) continue;
      const double level = static_cast<double>(small ? t.heap_top_after : t.pool_reserved);
      sum_ratio += level / (factor * static_cast<double>(demand));
      ++steady;
    }
    const double ratio = steady == 0 ? 0 : sum_ratio / static_cast<double>(steady);
    ok = ok && over == 0 && steady > 0 && std::abs(ratio - 1.0) <= 0.2;
    detail += fmt("%s%s: %zu rounds, %zu above trim+chunk, max held %s, steady reserved / (%.1f x demand) = %.3f over "
                  "%zu rounds",
                  small ? "" : "; ", small ? "heap" : "pool", series.rounds.size(), over,
                  format_size(max_held).c_str(), factor, ratio, steady);
  }
  return {ok, detail};
}

Outcome daemon_ordering() {
  backend::SimConfig c;
  c.capacity = 8 * kGiB;
  c.event_log = false;
  backend::SimBackend sim(c);
  std::vector<monitor::BatchFileEntry> files;
  std::mt19937 rng(11);
  std::vector<std::size_t> sizes;
  for (std::size_t i = 1; i <= 10; ++i) sizes.push_back(i * 100 * kMiB + i * 4 * kKiB);
  std::shuffle(sizes.begin(), sizes.end(), rng);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const std::string name = "/batch/file" + std::to_string(i);
    sim.load_file(name, sizes[i]);
    files.push_back({static_cast<pid_t>(100 + i % 3), name, sizes[i], 0});
  }
  monitor::ManifestSource source(files, &sim);

  const auto dir = std::filesystem::temp_directory_path() / ("fastalloc-accept-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  monitor::DaemonConfig config;
  config.reclaim.adv_thr = 0.3;
  config.registry_path = (dir / "registry").string();
  config.advisory_log = (dir / "advisories.csv").string();

  // Oracle: largest first, stop at the first occupancy at or below the threshold.
  const auto before = sim.memory_stats();
  std::vector<std::size_t> expect;
  {
    std::vector<std::size_t> sorted = sizes;
    std::sort(sorted.rbegin(), sorted.rend());
    std::size_t used = before.total - before.free;
    for (std::size_t s : sorted) {
      if (static_cast<double>(used) / static_cast<double>(before.total) <= config.reclaim.adv_thr) break;
      expect.push_back(s);
      used -= s;
    }
  }

  std::vector<monitor::Advisory> advisories;
  {
    monitor::MonitorDaemon daemon(config, sim, source);
    for (pid_t pid : {100, 101, 102}) daemon.handle_command("REG-BATCH " + std::to_string(pid));
    advisories = daemon.run_pass();
  }
  std::vector<std::size_t> logged;
  {
    std::ifstream in(config.advisory_log);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::vector<std::string> fields;
      std::stringstream ss(line);
      std::string f;
      while (std::getline(ss, f, ',')) fields.push_back(f);
      if (fields.size() == 5) logged.push_back(std::stoull(fields[2]));
    }
  }
  std::filesystem::remove_all(dir);

  bool decreasing = true;
  for (std::size_t i = 1; i < logged.size(); ++i) decreasing = decreasing && logged[i] < logged[i - 1];
  bool stop_ok = !advisories.empty() && advisories.back().usage_after <= config.reclaim.adv_thr;
  for (std::size_t i = 0; i < advisories.size(); ++i) {
    stop_ok = stop_ok && advisories[i].usage_before > config.reclaim.adv_thr;
  }
  const bool ok = logged == expect && decreasing && stop_ok;
  return {ok, fmt("usage %.4f, threshold %.2f, %zu advisories (oracle %zu), sizes strictly decreasing: %s, "
                  "final usage %.4f",
                  before.occupancy(), config.reclaim.adv_thr, logged.size(), expect.size(),
                  decreasing ? "yes" : "no", advisories.empty() ? 0.0 : advisories.back().usage_after)};
}

Outcome slo() {
  std::mt19937_64 rng(29);
  std::lognormal_distribution<double> d(3.0, 1.0);
  std::set<double> distinct;
  while (distinct.size() < 20'000) distinct.insert(d(rng));
  std::vector<double> v(distinct.begin(), distinct.end());
  std::shuffle(v.begin(), v.end(), rng);
  const double s = bench::compute_slo(v);
  const double frac = bench::slo_violation(v, s);
  return {frac >= 0.09 && frac <= 0.11, fmt("%zu distinct samples, slo %.3f, violation %.4f", v.size(), s, frac)};
}

Outcome sweep() {
  bench::WorkloadSpec spec;
  spec.request_size = kKiB;
  spec.total_bytes = kGiB;
  const auto result = bench::sweep_rsv_factor(
      {0.5, 1, 2}, spec, [] { return std::make_unique<backend::SimBackend>(testing::pressure_sim_config()); },
      [](backend::Backend& b) { return bench::gen_anon_pressure(b, testing::kPressureFree); });
  const double low = result.rows.front().reduction("p99");
  const double high = result.rows.back().reduction("p99");
  std::string detail = fmt("baseline p99 %.1f us; p99 reduction", result.baseline.at(99));
  for (const auto& r : result.rows) detail += fmt(" %.1f:%.1f%%", r.factor, r.reduction("p99"));
  detail += "; p99.9 reduction";
  for (const auto& r : result.rows) detail += fmt(" %.1f:%.1f%%", r.factor, r.reduction("p99.9"));
  bool partial = result.baseline_partial;
  for (const auto& r : result.rows) partial = partial || r.partial;
  return {!partial && low < high, detail};
}

Outcome real_smoke() {
  bench::WorkloadSpec s;
  s.request_size = kKiB;
  s.total_bytes = 256 * kMiB;
  s.backend = bench::BackendKind::kReal;
  s.mode = bench::Mode::kBaseline;
  backend::OsBackend b1;
  const auto base = bench::run_micro(s, b1);
  s.mode = bench::Mode::kHermes;
  backend::OsBackend b2;
  const auto hermes = bench::run_micro(s, b2);
  const double mb = bench::summarize(base.latency_us).mean;
  const double mh = bench::summarize(hermes.latency_us).mean;
  return {mh <= mb, fmt("1 KB x 256 MB on this host: mean %.3f us baseline, %.3f us hermes", mb, mh)};
}

}  // namespace

int main() {
  report("C1 bucket index formula", true, bucket_formula);
  report("C2 allocator soundness", true, soundness);
  report("C3 gradual reservation", true, gradual_reservation);
  report("C4 post-round bands", true, bands);
  report("C5 simulated latency trend", true, latency_trend);
  report("C6 reservation overhead", true, reservation_overhead);
  report("C7 daemon ordering", true, daemon_ordering);
  report("C8 SLO violation fraction", true, slo);
  report("C9 reservation factor sweep", true, sweep);
  report("C10 real backend smoke run", false, real_smoke);
  std::printf("%d gating criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
