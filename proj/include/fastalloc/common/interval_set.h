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
//
// Set of disjoint half-open address intervals, merged on insert.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iterator>
#include <map>
#include <vector>

namespace fastalloc {

class IntervalSet {
 public:
  using Map = std::map<std::uintptr_t, std::uintptr_t>;  // begin -> end

  void insert(std::uintptr_t begin, std::uintptr_t end) {
    if (begin >= end) return;
    auto it = map_.upper_bound(begin);
    if (it != map_.begin()) {
      auto prev = std::prev(it);
      if (prev->second >= begin) {
        begin = prev->first;
        if (prev->second > end) end = prev->second;
        it = map_.erase(prev);
      }
    }
    while (it != map_.end() && it->first <= end) {
      if (it->second > end) end = it->second;
      it = map_.erase(it);
    }
    map_.emplace(begin, end);
    recount();
  }

  void erase(std::uintptr_t begin, std::uintptr_t end) {
    if (begin >= end) return;
    auto it = map_.upper_bound(begin);
    if (it != map_.begin()) --it;
    std::vector<std::pair<std::uintptr_t, std::uintptr_t>> keep;
    while (it != map_.end() && it->first < end) {
      if (it->second <= begin) {
        ++it;
        continue;
      }
      if (it->first < begin) keep.emplace_back(it->first, begin);
      if (it->second > end) keep.emplace_back(end, it->second);
      it = map_.erase(it);
    }
    for (const auto& [b, e] : keep) map_.emplace(b, e);
    recount();
  }

  // True when every byte of [begin, end) is in the set.
  bool covers(std::uintptr_t begin, std::uintptr_t end) const {
    if (begin >= end) return true;
    auto it = map_.upper_bound(begin);
    if (it == map_.begin()) return false;
    --it;
    return it->first <= begin && it->second >= end;
  }

  // Parts of [begin, end) that are in the set.
  std::vector<std::pair<std::uintptr_t, std::uintptr_t>> overlap(std::uintptr_t begin,
                                                                 std::uintptr_t end) const {
    std::vector<std::pair<std::uintptr_t, std::uintptr_t>> out;
    auto it = map_.upper_bound(begin);
    if (it != map_.begin()) --it;
    for (; it != map_.end() && it->first < end; ++it) {
      std::uintptr_t b = it->first > begin ? it->first : begin;
      std::uintptr_t e = it->second < end ? it->second : end;
      if (b < e) out.emplace_back(b, e);
    }
    return out;
  }

  std::size_t bytes() const { return bytes_; }
  bool empty() const { return map_.empty(); }
  const Map& intervals() const { return map_; }
  void clear() {
    map_.clear();
    bytes_ = 0;
  }

 private:
  void recount() {
    bytes_ = 0;
    for (const auto& [b, e] : map_) bytes_ += e - b;
  }

  Map map_;
  std::size_t bytes_ = 0;
};

}  // namespace fastalloc
