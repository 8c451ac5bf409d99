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
// Latency statistics: nearest-rank percentiles, CDF export, comparisons
// and SLO accounting.

#pragma once

#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fastalloc::bench {

class ReportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline const std::vector<double> kDefaultPercentiles{50, 90, 95, 99, 99.9};

// Nearest rank: the value at 1-based rank ceil(p/100 * n) of the sorted
// samples. p in (0, 100], resolved to 1/1000 of a percent.
double nearest_rank(const std::vector<double>& sorted, double p);

struct Summary {
  std::size_t count = 0;
  double mean = 0;
  double min = 0;
  double max = 0;
  std::vector<std::pair<double, double>> percentiles;  // (p, value)

  // Throws ReportError when p was not requested.
  double at(double p) const;
};

// Throws ReportError on an empty series.
Summary summarize(const std::vector<double>& samples, const std::vector<double>& percentiles = kDefaultPercentiles);

struct Comparison {
  std::string metric;  // "mean" or "p<value>"
  double base = 0;
  double other = 0;
  // (base - other) / base * 100; zero when base is zero.
  double reduction_pct = 0;
};

std::vector<Comparison> compare(const Summary& base, const Summary& other);

double compute_slo(const std::vector<double>& baseline_dedicated);
// Fraction of samples strictly above slo. Throws ReportError unless slo > 0.
double slo_violation(const std::vector<double>& samples, double slo);

// Text table of a summary, one metric per line.
void write_summary(std::ostream& out, const Summary& s);
void write_comparison(std::ostream& out, const std::vector<Comparison>& rows);

// `seq,latency_us`
void write_series_csv(std::ostream& out, const std::vector<double>& samples);
std::vector<double> read_series_csv(std::istream& in);

// `latency_us,count,cdf`: one row per distinct value in ascending order;
// cdf is the fraction of samples at or below the value.
void write_cdf_csv(std::ostream& out, const std::vector<double>& samples);

struct CdfRow {
  double latency_us = 0;
  std::size_t count = 0;
  double cdf = 0;
};
std::vector<CdfRow> read_cdf_csv(std::istream& in);

}  // namespace fastalloc::bench
