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

#include "fastalloc/common/units.h"

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace fastalloc {

std::optional<std::size_t> parse_size(std::string_view text) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  if (text.empty()) return std::nullopt;

  std::size_t i = 0;
  while (i < text.size() && (std::isdigit(static_cast<unsigned char>(text[i])) || text[i] == '.')) ++i;
  if (i == 0) return std::nullopt;
  double number = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + i, number);
  if (ec != std::errc{} || ptr != text.data() + i || number < 0) return std::nullopt;

  std::string unit;
  for (char c : text.substr(i)) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    unit.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  std::size_t scale = 1;
  if (unit.empty() || unit == "B") {
    scale = 1;
  } else if (unit == "K" || unit == "KB" || unit == "KIB") {
    scale = kKiB;
  } else if (unit == "M" || unit == "MB" || unit == "MIB") {
    scale = kMiB;
  } else if (unit == "G" || unit == "GB" || unit == "GIB") {
    scale = kGiB;
  } else if (unit == "T" || unit == "TB" || unit == "TIB") {
    scale = kGiB * 1024;
  } else {
    return std::nullopt;
  }
  double bytes = number * static_cast<double>(scale);
  if (bytes > 1.8e19) return std::nullopt;
  return static_cast<std::size_t>(std::llround(bytes));
}

std::string format_size(std::size_t bytes) {
  if (bytes != 0 && bytes % kGiB == 0) return std::to_string(bytes / kGiB) + "GB";
  if (bytes != 0 && bytes % kMiB == 0) return std::to_string(bytes / kMiB) + "MB";
  if (bytes != 0 && bytes % kKiB == 0) return std::to_string(bytes / kKiB) + "KB";
  return std::to_string(bytes) + "B";
}

std::string format_us(std::chrono::nanoseconds ns) {
  const std::int64_t v = ns.count();
  const std::int64_t mag = v < 0 ? -v : v;
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s%lld.%03lld", v < 0 ? "-" : "",
                static_cast<long long>(mag / 1000), static_cast<long long>(mag % 1000));
  return buf;
}

}  // namespace fastalloc
