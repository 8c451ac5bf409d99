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

#include <sys/types.h>

namespace fastalloc::alloc {

// Answers whether a process is registered as latency-critical.
class RegistryProbe {
 public:
  virtual ~RegistryProbe() = default;
  virtual bool is_registered(pid_t pid) const = 0;
};

// Fixed answer; used by benchmarks and tests.
class StaticRegistryProbe final : public RegistryProbe {
 public:
  explicit StaticRegistryProbe(bool registered) : registered_(registered) {}
  bool is_registered(pid_t) const override { return registered_; }

 private:
  bool registered_;
};

}  // namespace fastalloc::alloc
