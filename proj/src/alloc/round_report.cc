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

#include "fastalloc/alloc/round_report.h"

#include "fastalloc/common/units.h"

namespace fastalloc::alloc {

std::chrono::nanoseconds RoundReport::elapsed() const {
  std::chrono::nanoseconds total{0};
  for (const auto& a : actions) total += a.elapsed;
  return total;
}

std::size_t RoundReport::backend_calls(Component c) const {
  std::size_t n = 0;
  for (const auto& a : actions) n += a.component == c;
  return n;
}

void write_round_csv(std::ostream& out, const std::vector<RoundReport>& rounds) {
  out << "round,component,action,bytes,elapsed_us\n";
  for (const auto& r : rounds) {
    for (const auto& a : r.actions) {
      out << r.round << ',' << (a.component == Component::kHeap ? "heap" : "mmap") << ',' << a.action << ','
          << a.bytes << ',' << format_us(a.elapsed) << '\n';
    }
  }
}

}  // namespace fastalloc::alloc
