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
// bench: allocation latency micro benchmark.
//
//   bench run --size 1KB --total 1GB --mode hermes --pressure anon:300MB --out series.csv
//   bench report --in series.csv --baseline base.csv --slo-from dedicated.csv
//   bench sweep --factor 0.5,1,2,3 --size 1KB --total 256MB --pressure anon:300MB

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fastalloc/backend/os_backend.h"
#include "fastalloc/backend/sim_backend.h"
#include "fastalloc/bench/pressure.h"
#include "fastalloc/bench/report.h"
#include "fastalloc/bench/sweep.h"
#include "fastalloc/bench/workload.h"
#include "fastalloc/common/kv_config.h"
#include "fastalloc/common/units.h"

using namespace fastalloc;
using namespace fastalloc::bench;

namespace {

struct PressureArg {
  bool file = false;
  std::size_t file_bytes = 0;
  std::size_t target_free = 0;
};

std::size_t size_arg(const std::string& text, const char* what) {
  auto v = parse_size(text);
  if (!v) throw CLI::ValidationError(what, "bad size '" + text + "'");
  return *v;
}

// anon:<free> | file:<bytes>,<free>
std::optional<PressureArg> parse_pressure(const std::string& text) {
  if (text.empty()) return std::nullopt;
  PressureArg p;
  if (text.rfind("anon:", 0) == 0) {
    p.target_free = size_arg(text.substr(5), "--pressure");
    return p;
  }
  if (text.rfind("file:", 0) == 0) {
    const auto rest = text.substr(5);
    const auto comma = rest.find(',');
    if (comma == std::string::npos) throw CLI::ValidationError("--pressure", "expected file:<bytes>,<free>");
    p.file = true;
    p.file_bytes = size_arg(rest.substr(0, comma), "--pressure");
    p.target_free = size_arg(rest.substr(comma + 1), "--pressure");
    return p;
  }
  throw CLI::ValidationError("--pressure", "expected anon:<free> or file:<bytes>,<free>");
}

struct CommonArgs {
  std::string size = "1KB";
  std::string total = "1GB";
  std::string backend = "sim";
  std::string pressure;
  std::string sim_config;
  std::string policy;
  std::string scratch_dir = "/tmp/fastalloc-pressure";
  double fill_bandwidth_gib = 10.0;
  bool serial_management = false;
  std::uint64_t seed = 1;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--size", size, "Request size (e.g. 1KB, 256KB)")->capture_default_str();
    cmd.add_option("--total", total, "Total bytes requested per run")->capture_default_str();
    cmd.add_option("--backend", backend, "real | sim")->check(CLI::IsMember({"real", "sim"}))->capture_default_str();
    cmd.add_option("--pressure", pressure, "anon:<free> or file:<bytes>,<free>");
    cmd.add_option("--sim-config", sim_config, "Simulator config file (key = value)");
    cmd.add_option("--policy", policy, "Reservation policy file (key = value)");
    cmd.add_option("--scratch-dir", scratch_dir, "Scratch directory for real file pressure")->capture_default_str();
    cmd.add_option("--fill-bandwidth", fill_bandwidth_gib, "Sim: application fill rate in GiB/s")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd.add_flag("--serial-management", serial_management, "Sim: an overrunning round delays the next one");
    cmd.add_option("--seed", seed, "Seed for the mixed variant")->capture_default_str();
  }

  WorkloadSpec spec() const {
    WorkloadSpec s;
    s.request_size = size_arg(size, "--size");
    s.total_bytes = size_arg(total, "--total");
    s.backend = *parse_backend(backend);
    s.seed = seed;
    return s;
  }

  MicroOptions options() const {
    MicroOptions o;
    if (!policy.empty()) o.policy = alloc::ReservationPolicy::load(policy);
    o.fill_bandwidth = fill_bandwidth_gib * static_cast<double>(kGiB);
    o.serial_management = serial_management;
    return o;
  }

  std::unique_ptr<backend::Backend> make_backend() const {
    if (backend == "real") return std::make_unique<backend::OsBackend>();
    backend::SimConfig c = sim_config.empty() ? backend::SimConfig{} : backend::SimConfig::load(sim_config);
    c.event_log = false;
    return std::make_unique<backend::SimBackend>(c);
  }

  std::unique_ptr<PressureHandle> apply_pressure(backend::Backend& b) const {
    auto p = parse_pressure(pressure);
    if (!p) return nullptr;
    FilePressureOptions fo;
    fo.scratch_dir = scratch_dir;
    return p->file ? gen_file_pressure(b, p->file_bytes, p->target_free, fo) : gen_anon_pressure(b, p->target_free);
  }
};

void print_stats_line(const char* label, backend::Backend& b) {
  try {
    const auto s = b.memory_stats();
    std::printf("%s: available %s, file cache %s\n", label, format_size(s.available).c_str(),
                format_size(s.file_cache).c_str());
  } catch (const std::exception&) {
  }
}

int cmd_run(const CommonArgs& args, const std::string& mode, bool mixed, const std::optional<double>& factor,
            const std::string& out_path, const std::string& cdf_path, const std::string& rounds_path) {
  WorkloadSpec spec = args.spec();
  spec.mode = *parse_mode(mode);
  spec.mixed = mixed;
  spec.rsv_factor = factor;
  const MicroOptions options = args.options();
  auto backend = args.make_backend();
  auto pressure = args.apply_pressure(*backend);
  print_stats_line("before run", *backend);
  const LatencySeries series = run_micro(spec, *backend, options);
  if (pressure) pressure->release();

  std::printf("%s/%s %s x %zu requests%s\n", std::string(mode_name(spec.mode)).c_str(),
              std::string(backend_name(spec.backend)).c_str(), format_size(spec.request_size).c_str(),
              series.latency_us.size(), series.partial ? " (partial)" : "");
  if (!series.latency_us.empty()) write_summary(std::cout, summarize(series.latency_us));
  if (spec.backend == BackendKind::kReal) std::printf("timer overhead %.0f ns per sample\n", series.timer_overhead_ns);
  if (spec.mode == Mode::kHermes) {
    std::printf("rounds %zu, management %.0f us over %.0f us run (busy %.2f)\n", series.rounds.size(),
                series.management_us, series.run_time_us, series.management_busy());
  }
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    write_series_csv(out, series.latency_us);
  }
  if (!cdf_path.empty()) {
    std::ofstream out(cdf_path);
    write_cdf_csv(out, series.latency_us);
  }
  if (!rounds_path.empty()) {
    std::ofstream out(rounds_path);
    out << "clock_us,small_demand,large_demand,heap_tgt,heap_top_after,heap_reserved,pool_tgt,pool_total_after,"
           "pool_reserved,elapsed_us\n";
    for (const auto& r : series.rounds) {
      out << r.clock_us << ',' << r.small_demand << ',' << r.large_demand << ',' << r.heap.tgt_mem << ','
          << r.heap_top_after << ',' << r.heap_reserved << ',' << r.mmap.tgt_mem << ',' << r.pool_total_after << ','
          << r.pool_reserved << ',' << r.elapsed_us << '\n';
    }
  }
  if (series.partial) {
    std::fprintf(stderr, "bench: run aborted: %s\n", series.abort_reason.c_str());
    return 3;
  }
  return 0;
}

std::vector<double> load_series(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ReportError("cannot read " + path);
  return read_series_csv(in);
}

int cmd_report(const std::string& in_path, const std::string& baseline_path, std::optional<double> slo,
               const std::string& slo_from, const std::vector<double>& percentiles, const std::string& cdf_path) {
  const auto series = load_series(in_path);
  const Summary s = summarize(series, percentiles);
  write_summary(std::cout, s);
  if (!baseline_path.empty()) {
    const Summary base = summarize(load_series(baseline_path), percentiles);
    std::cout << "\nreduction vs " << baseline_path << '\n';
    write_comparison(std::cout, compare(base, s));
  }
  if (!slo_from.empty()) slo = compute_slo(load_series(slo_from));
  if (slo) std::printf("\nslo %.3f us, violation %.4f\n", *slo, slo_violation(series, *slo));
  if (!cdf_path.empty()) {
    std::ofstream out(cdf_path);
    write_cdf_csv(out, series);
  }
  return 0;
}

int cmd_sweep(const CommonArgs& args, const std::vector<double>& factors) {
  WorkloadSpec spec = args.spec();
  const MicroOptions options = args.options();
  const auto result = sweep_rsv_factor(
      factors, spec, [&] { return args.make_backend(); },
      [&](backend::Backend& b) { return args.apply_pressure(b); }, options);
  std::printf("baseline mean %.3f us, p99 %.3f us%s\n", result.baseline.mean, result.baseline.at(99),
              result.baseline_partial ? " (partial)" : "");
  write_sweep_table(std::cout, result);
  bool partial = result.baseline_partial;
  for (const auto& r : result.rows) partial = partial || r.partial;
  return partial ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Allocation latency micro benchmark"};
  app.require_subcommand(1);

  CommonArgs run_args;
  std::string mode = "hermes", out_path, cdf_path, rounds_path;
  bool mixed = false;
  std::optional<double> factor;
  auto* run = app.add_subcommand("run", "Run one workload and print its latency summary");
  run_args.add_to(*run);
  run->add_option("--mode", mode, "baseline | hermes")->check(CLI::IsMember({"baseline", "hermes"}))->capture_default_str();
  run->add_option("--rsv-factor", factor, "Override the reservation factor")->check(CLI::PositiveNumber);
  run->add_flag("--mixed", mixed, "Free a random live block after half of the requests");
  run->add_option("--out", out_path, "Series CSV (seq,latency_us)");
  run->add_option("--cdf", cdf_path, "CDF CSV (latency_us,count,cdf)");
  run->add_option("--rounds", rounds_path, "Per-round reservation trace CSV");

  std::string in_path, baseline_path, slo_from, report_cdf;
  std::optional<double> slo;
  std::vector<double> percentiles = kDefaultPercentiles;
  auto* report = app.add_subcommand("report", "Summarize a series CSV");
  report->add_option("--in", in_path, "Series CSV")->required();
  report->add_option("--baseline", baseline_path, "Series to compare against");
  report->add_option("--slo", slo, "SLO in microseconds")->check(CLI::PositiveNumber);
  report->add_option("--slo-from", slo_from, "Dedicated baseline series; SLO = its p90");
  report->add_option("--percentiles", percentiles, "Percentiles to report")->delimiter(',');
  report->add_option("--cdf", report_cdf, "Write the CDF CSV here");

  CommonArgs sweep_args;
  std::vector<double> factors{0.5, 1, 2, 3};
  auto* sweep = app.add_subcommand("sweep", "Compare hermes runs across reservation factors with a baseline");
  sweep_args.add_to(*sweep);
  sweep->add_option("--factor", factors, "Comma separated factors")->delimiter(',')->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(run_args, mode, mixed, factor, out_path, cdf_path, rounds_path);
    if (*report) return cmd_report(in_path, baseline_path, slo, slo_from, percentiles, report_cdf);
    if (*sweep) return cmd_sweep(sweep_args, factors);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "bench: %s\n", e.what());
    return 2;
  }
  return 0;
}
