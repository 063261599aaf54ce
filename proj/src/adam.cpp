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

#include "relward/adam.hpp"

#include <algorithm>
#include <cmath>

#include "relward/errors.hpp"

namespace relward {

void adam_update(std::span<double> param, std::span<const double> grad,
                 AdamMoments& moments, std::uint64_t t, const AdamHyper& hyper) {
  if (moments.m.empty() && moments.v.empty()) {
    moments.m.assign(param.size(), 0.0);
    moments.v.assign(param.size(), 0.0);
  }
  if (grad.size() != param.size() || moments.m.size() != param.size() ||
      moments.v.size() != param.size()) {
    throw ContractError("adam: parameter has " + std::to_string(param.size()) +
                        " values, gradient " + std::to_string(grad.size()) +
                        ", moments " + std::to_string(moments.m.size()));
  }
  if (t == 0) throw ContractError("adam: step counter must start at 1");
  const double td = static_cast<double>(t);
  const double c1 = 1.0 - std::pow(hyper.beta1, td);
  const double c2 = 1.0 - std::pow(hyper.beta2, td);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    moments.m[i] = hyper.beta1 * moments.m[i] + (1.0 - hyper.beta1) * g;
    moments.v[i] = hyper.beta2 * moments.v[i] + (1.0 - hyper.beta2) * g * g;
    const double m_hat = moments.m[i] / c1;
    const double v_hat = moments.v[i] / c2;
    param[i] -= hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps);
  }
}

AdamReport adam_step(ModelParams& params, const GradientSet& grads, AdamState& state,
                     const std::set<std::string>& frozen) {
  std::map<std::string, std::span<const double>> g;
  for_each_parameter(grads, [&](const std::string& name, std::span<const double> v) {
    g.emplace(name, v);
  });
  const bool mu_learnable = params.fb.learnable();
  const std::uint64_t t = state.step + 1;
  for_each_parameter(params, [&](const std::string& name, std::span<double> v) {
    auto it = g.find(name);
    if (it == g.end()) throw ContractError("adam: no gradient for " + name);
    if (it->second.size() != v.size()) {
      throw ContractError("adam: gradient for " + name + " has wrong size");
    }
  });
  state.step = t;

  AdamReport report;
  for_each_parameter(params, [&](const std::string& name, std::span<double> v) {
    if (frozen.count(name)) return;
    if (name == "fb.mu" && !mu_learnable) return;
    adam_update(v, g.at(name), state.moments[name], t, state.hyper);
  });
  if (mu_learnable && !frozen.count("fb.mu")) {
    for (double& mu : params.fb.mu) {
      const double clipped = std::clamp(mu, kMuFloor, kMuCeiling);
      if (clipped != mu) {
        mu = clipped;
        ++report.mu_clipped;
      }
    }
  }
  return report;
}

}  // namespace relward
