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
#include "fastalloc/bench/sweep.h"

#include <iomanip>

namespace fastalloc::bench {

double SweepRow::reduction(const std::string& metric) const {
  for (const auto& c : vs_baseline) {
    if (c.metric == metric) return c.reduction_pct;
  }
  throw ReportError("no metric " + metric);
}

namespace {

LatencySeries one_run(const WorkloadSpec& spec, const BackendFactory& make_backend, const PressureSetup& pressure,
                      const MicroOptions& options) {
  auto backend = make_backend();
  std::unique_ptr<PressureHandle> held = pressure ? pressure(*backend) : nullptr;
  LatencySeries s = run_micro(spec, *backend, options);
  if (held) held->release();
  return s;
}

}  // namespace

SweepResult sweep_rsv_factor(const std::vector<double>& factors, WorkloadSpec spec, const BackendFactory& make_backend,
                             const PressureSetup& pressure, const MicroOptions& options) {
  SweepResult result;
  spec.mode = Mode::kBaseline;
  spec.rsv_factor.reset();
  const LatencySeries base = one_run(spec, make_backend, pressure, options);
  result.baseline = summarize(base.latency_us);
  result.baseline_partial = base.partial;
  spec.mode = Mode::kHermes;
  for (double f : factors) {
    spec.rsv_factor = f;
    const LatencySeries s = one_run(spec, make_backend, pressure, options);
    SweepRow row;
    row.factor = f;
    row.summary = summarize(s.latency_us);
    row.vs_baseline = compare(result.baseline, row.summary);
    row.partial = s.partial;
    result.rows.push_back(std::move(row));
  }
  return result;
}

void write_sweep_table(std::ostream& out, const SweepResult& result) {
  out << std::left << std::setw(8) << "factor" << std::right << std::setw(12) << "mean_us";
  if (!result.rows.empty()) {
    for (const auto& c : result.rows.front().vs_baseline) out << std::setw(11) << (c.metric + "_red%");
  }
  out << '\n' << std::fixed;
  for (const auto& r : result.rows) {
    out << std::left << std::setw(8) << std::setprecision(2) << r.factor << std::right << std::setw(12)
        << std::setprecision(3) << r.summary.mean;
    for (const auto& c : r.vs_baseline) out << std::setw(11) << std::setprecision(1) << c.reduction_pct;
    if (r.partial) out << "  (partial)";
    out << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

}  // namespace fastalloc::bench
