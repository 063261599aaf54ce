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

// Bias-corrected Adam over every trainable tensor of a model.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "relward/model.hpp"

namespace relward {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::map<std::string, AdamMoments> moments;
};

// Lower clamp for mu after an update. Upper clamp is Nyquist.
inline constexpr double kMuFloor = 1e-4;
inline constexpr double kMuCeiling = 0.5;

/// One update of a single tensor at (1-based) step t. Throws ContractError
/// when the sizes of param, grad and moments disagree.
void adam_update(std::span<double> param, std::span<const double> grad,
                 AdamMoments& moments, std::uint64_t t, const AdamHyper& hyper);

struct AdamReport {
  std::size_t mu_clipped = 0;  // entries of fb.mu pulled back into range
};

/// Advances state.step and updates every parameter not named in frozen.
/// fb.mu is skipped for fixed-mel filterbanks.
AdamReport adam_step(ModelParams& params, const GradientSet& grads, AdamState& state,
                     const std::set<std::string>& frozen = {});

}  // namespace relward
