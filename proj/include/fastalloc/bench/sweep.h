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
// Reservation-factor sweep: one baseline run and one hermes run per factor,
// each on a fresh backend with the same pressure setup.

#pragma once

#include <functional>
#include <memory>
#include <ostream>
#include <vector>

#include "fastalloc/backend/backend.h"
#include "fastalloc/bench/pressure.h"
#include "fastalloc/bench/report.h"
#include "fastalloc/bench/workload.h"

namespace fastalloc::bench {

using BackendFactory = std::function<std::unique_ptr<backend::Backend>()>;
// May return null for no pressure.
using PressureSetup = std::function<std::unique_ptr<PressureHandle>(backend::Backend&)>;

struct SweepRow {
  double factor = 0;
  Summary summary;
  std::vector<Comparison> vs_baseline;
  bool partial = false;

  double reduction(const std::string& metric) const;
};

struct SweepResult {
  Summary baseline;
  bool baseline_partial = false;
  std::vector<SweepRow> rows;
};

SweepResult sweep_rsv_factor(const std::vector<double>& factors, WorkloadSpec spec, const BackendFactory& make_backend,
                             const PressureSetup& pressure, const MicroOptions& options = {});

// factor, mean_us, p50..p99.9 reductions in percent.
void write_sweep_table(std::ostream& out, const SweepResult& result);

}  // namespace fastalloc::bench
