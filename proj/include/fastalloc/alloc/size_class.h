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
// Bucket hashing for the large-chunk pool.

#pragma once

#include <cstddef>

namespace fastalloc::alloc {

// min(floor(chunk_size / min_mmap_size), table_size). Throws
// backend::ContractViolation when chunk_size < min_mmap_size.
std::size_t bucket_index(std::size_t chunk_size, std::size_t min_mmap_size = std::size_t{128} << 10,
                         std::size_t table_size = 8);

// min(bucket_index(request_size) + 1, table_size). Every chunk in the
// returned bucket is at least request_size unless it is the top bucket.
std::size_t best_fit_index(std::size_t request_size,
                           std::size_t min_mmap_size = std::size_t{128} << 10,
                           std::size_t table_size = 8);

}  // namespace fastalloc::alloc
