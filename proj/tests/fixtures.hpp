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

// Shared test fixtures: small models and clip batches.
#pragma once

#include <string>
#include <vector>

#include "relward/rng.hpp"
#include "relward/training.hpp"

namespace fixture {

// Default init with biases and relevance output layers nudged off zero, so
// no ReLU sits exactly on its kink and relevance weights are not uniform.
inline relward::AcousticModel perturbed_model(relward::Variant v, std::uint64_t seed = 3) {
  relward::ModelConfig c = relward::tiny_config();
  relward::apply_variant(c, v);
  relward::AcousticModel m = relward::make_model(c, seed);
  relward::Rng r = relward::make_rng(seed, "perturb");
  relward::for_each_parameter(m.params, [&](const std::string& n, std::span<double> p) {
    const bool bias = n.size() > 5 && n.compare(n.size() - 5, 5, ".bias") == 0;
    const bool rel_out = n.find("_net.output") != std::string::npos;
    if (bias || rel_out)
      for (double& x : p) x += relward::uniform(r, -0.05, 0.05);
  });
  return m;
}

struct Batch {
  std::vector<relward::RawFrameBlock> blocks;
  std::vector<int> labels;

  std::vector<const relward::RawFrameBlock*> ptrs() const {
    std::vector<const relward::RawFrameBlock*> out;
    for (const auto& b : blocks) out.push_back(&b);
    return out;
  }
};

inline Batch clip_batch(const relward::ModelConfig& c, std::size_t n, std::uint64_t seed = 10) {
  Batch b;
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % static_cast<std::size_t>(c.classes));
    const auto clip = relward::synthesize_clip({cls, seed + i, 0});
    b.blocks.push_back(relward::center_block(clip.buffer, c));
    b.labels.push_back(cls);
  }
  return b;
}

}  // namespace fixture
