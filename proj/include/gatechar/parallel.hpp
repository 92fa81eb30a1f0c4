// Copyright 2026 The gatechar Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string_view>

namespace gatechar {

/// SplitMix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x);

/// Seed for one work item, a pure function of the master seed and the item
/// coordinates. Independent of scheduling.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> coords);

/// Seed of a named pipeline stage (FNV-1a of the label mixed into master).
std::uint64_t stage_seed(std::uint64_t master, std::string_view label);

/// Runs body(i) for i in [0, n) on up to `workers` threads. Each index runs
/// exactly once; the first exception is rethrown after all threads join.
void parallel_for(int n, int workers, const std::function<void(int)>& body);

/// Process-wide default used when callers pass workers <= 0.
int default_workers();
void set_default_workers(int workers);

}  // namespace gatechar
