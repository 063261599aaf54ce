// Copyright 2026 The relward Authors.
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

#include <cstddef>
#include <functional>

namespace relward {

/// Worker count: hardware concurrency, capped by RELWARD_THREADS when set.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Callers must
/// make the result independent of scheduling (disjoint outputs per i).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace relward
