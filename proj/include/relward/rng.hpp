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

#include <cstdint>
#include <random>
#include <string_view>

namespace relward {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a run seed and a stream name
/// ("data", "init", "shuffle", ...). FNV-1a over the name, then splitmix64.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

inline Rng make_rng(std::uint64_t seed, std::string_view stream) {
  return Rng(derive_seed(seed, stream));
}

/// Uniform double in [lo, hi) built directly from the engine output so that
/// the sequence does not depend on the standard library's distributions.
double uniform(Rng& rng, double lo, double hi);

/// Standard normal via Box-Muller on uniform().
double gaussian(Rng& rng);

}  // namespace relward
