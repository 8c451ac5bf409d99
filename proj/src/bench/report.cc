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
#include "fastalloc/bench/report.h"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace fastalloc::bench {

namespace {

std::string metric_name(double p) {
  std::ostringstream s;
  s << 'p' << p;
  return s.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  return out;
}

double to_double(const std::string& text, int lineno) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used != text.size() && text.find_first_not_of(" \r", used) != std::string::npos) throw std::exception();
    return v;
  } catch (...) {
    throw ReportError("line " + std::to_string(lineno) + ": bad number '" + text + "'");
  }
}

}  // namespace

double nearest_rank(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw ReportError("empty series");
  if (!(p > 0.0 && p <= 100.0)) throw ReportError("percentile out of range");
  const auto milli = static_cast<unsigned long long>(std::llround(p * 1000.0));
  const unsigned long long n = sorted.size();
  unsigned long long rank = (milli * n + 99'999) / 100'000;
  rank = std::clamp<unsigned long long>(rank, 1, n);
  return sorted[rank - 1];
}

double Summary::at(double p) const {
  for (const auto& [q, v] : percentiles) {
    if (q == p) return v;
  }
  throw ReportError(metric_name(p) + " not in summary");
}

Summary summarize(const std::vector<double>& samples, const std::vector<double>& percentiles) {
  if (samples.empty()) throw ReportError("empty series");
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  Summary s;
  s.count = sorted.size();
  s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(s.count);
  s.min = sorted.front();
  s.max = sorted.back();
  for (double p : percentiles) s.percentiles.emplace_back(p, nearest_rank(sorted, p));
  return s;
}

std::vector<Comparison> compare(const Summary& base, const Summary& other) {
  auto row = [](std::string name, double b, double o) {
    return Comparison{std::move(name), b, o, b == 0.0 ? 0.0 : (b - o) / b * 100.0};
  };
  std::vector<Comparison> out{row("mean", base.mean, other.mean)};
  for (const auto& [p, v] : base.percentiles) {
    auto it = std::find_if(other.percentiles.begin(), other.percentiles.end(),
                           [&](const auto& q) { return q.first == p; });
    if (it != other.percentiles.end()) out.push_back(row(metric_name(p), v, it->second));
  }
  return out;
}

double compute_slo(const std::vector<double>& baseline_dedicated) {
  std::vector<double> sorted = baseline_dedicated;
  std::sort(sorted.begin(), sorted.end());
  return nearest_rank(sorted, 90);
}

double slo_violation(const std::vector<double>& samples, double slo) {
  if (!(slo > 0)) throw ReportError("slo must be positive");
  if (samples.empty()) return 0.0;
  const auto above = std::count_if(samples.begin(), samples.end(), [&](double v) { return v > slo; });
  return static_cast<double>(above) / static_cast<double>(samples.size());
}

void write_summary(std::ostream& out, const Summary& s) {
  out << std::fixed << std::setprecision(3);
  out << "count " << s.count << '\n';
  out << "mean  " << s.mean << " us\n";
  for (const auto& [p, v] : s.percentiles) out << std::left << std::setw(6) << metric_name(p) << v << " us\n";
  out << "max   " << s.max << " us\n";
  out.unsetf(std::ios::floatfield);
}

void write_comparison(std::ostream& out, const std::vector<Comparison>& rows) {
  out << std::fixed << std::setprecision(3);
  out << std::left << std::setw(8) << "metric" << std::right << std::setw(14) << "base_us" << std::setw(14)
      << "other_us" << std::setw(12) << "reduction%" << '\n';
  for (const auto& r : rows) {
    out << std::left << std::setw(8) << r.metric << std::right << std::setw(14) << r.base << std::setw(14)
        << r.other << std::setw(12) << std::setprecision(1) << r.reduction_pct << std::setprecision(3) << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

void write_series_csv(std::ostream& out, const std::vector<double>& samples) {
  out << "seq,latency_us\n" << std::fixed << std::setprecision(3);
  for (std::size_t i = 0; i < samples.size(); ++i) out << i << ',' << samples[i] << '\n';
  out.unsetf(std::ios::floatfield);
}

std::vector<double> read_series_csv(std::istream& in) {
  std::vector<double> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("seq", 0) == 0) continue;
    auto f = split_csv_line(line);
    if (f.size() != 2) throw ReportError("line " + std::to_string(lineno) + ": expected seq,latency_us");
    const double v = to_double(f[1], lineno);
    if (v < 0) throw ReportError("line " + std::to_string(lineno) + ": negative latency");
    out.push_back(v);
  }
  return out;
}

void write_cdf_csv(std::ostream& out, const std::vector<double>& samples) {
  std::vector<double> sorted = samples;
  std::sort(sorted.begin(), sorted.end());
  out << "latency_us,count,cdf\n";
  const double n = static_cast<double>(sorted.size());
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    out << std::fixed << std::setprecision(3) << sorted[i] << ',' << (j - i) << ','
        << std::setprecision(9) << static_cast<double>(j) / n << '\n';
    i = j;
  }
  out.unsetf(std::ios::floatfield);
}

std::vector<CdfRow> read_cdf_csv(std::istream& in) {
  std::vector<CdfRow> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (lineno == 1 && line.rfind("latency_us", 0) == 0)) continue;
    auto f = split_csv_line(line);
    if (f.size() != 3) throw ReportError("line " + std::to_string(lineno) + ": expected latency_us,count,cdf");
    out.push_back({to_double(f[0], lineno), static_cast<std::size_t>(to_double(f[1], lineno)),
                   to_double(f[2], lineno)});
  }
  return out;
}

}  // namespace fastalloc::bench
