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

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace fastalloc {

inline constexpr std::size_t kKiB = std::size_t{1} << 10;
inline constexpr std::size_t kMiB = std::size_t{1} << 20;
inline constexpr std::size_t kGiB = std::size_t{1} << 30;

// `align` must be a power of two.
constexpr std::size_t round_up(std::size_t value, std::size_t align) {
  return (value + align - 1) & ~(align - 1);
}

constexpr std::size_t round_down(std::size_t value, std::size_t align) {
  return value & ~(align - 1);
}

constexpr bool is_aligned(std::size_t value, std::size_t align) {
  return (value & (align - 1)) == 0;
}

constexpr std::size_t ceil_div(std::size_t a, std::size_t b) {
  return (a + b - 1) / b;
}

// Parses "4096", "128KB", "5MB", "1G", "300 MiB". Units are binary (KB = 1024).
std::optional<std::size_t> parse_size(std::string_view text);

// Renders a byte count with the largest unit that divides it exactly.
std::string format_size(std::size_t bytes);

inline double to_us(std::chrono::nanoseconds ns) {
  return static_cast<double>(ns.count()) / 1000.0;
}

inline std::chrono::nanoseconds from_us(double us) {
  return std::chrono::nanoseconds{static_cast<std::int64_t>(us * 1000.0 + (us >= 0 ? 0.5 : -0.5))};
}

// Fixed three-decimal microsecond rendering; exact for integral nanoseconds.
std::string format_us(std::chrono::nanoseconds ns);

}  // namespace fastalloc
