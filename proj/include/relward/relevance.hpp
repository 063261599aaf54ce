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

// Relevance sub-networks: pool the representation to one value per feature
// (filter or modulation map), run a two-layer FC network, and turn its
// output into softmax weights that scale each feature without mixing them.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "relward/acoustic_filterbank.hpp"
#include "relward/layers.hpp"
#include "relward/modulation_layer.hpp"
#include "relward/rng.hpp"

namespace relward {

inline constexpr std::size_t kDefaultAcousticHidden = 128;
inline constexpr std::size_t kDefaultModulationHidden = 32;

enum class RelevancePooling { time_average, global_average };
enum class RelevanceActivation { relu };

struct RelevanceNet {
  Dense hidden;  // H x D
  Dense output;  // D_out x H
  RelevancePooling pooling = RelevancePooling::time_average;
  RelevanceActivation activation = RelevanceActivation::relu;

  std::size_t input_dim() const { return hidden.in_dim(); }
  std::size_t output_dim() const { return output.out_dim(); }
};

/// Xavier-initialised hidden layer. The output layer is zero when
/// `zero_output` is set, which makes the initial weights uniform.
RelevanceNet make_relevance_net(std::size_t features, std::size_t hidden,
                                RelevancePooling pooling, Rng& rng,
                                bool zero_output = true);

struct RelevanceWeights {
  std::vector<double> w;
};

/// Max-shifted softmax.
std::vector<double> softmax(std::span<const double> v);

/// d logits given softmax output w and d w.
std::vector<double> softmax_backward(std::span<const double> w,
                                     std::span<const double> d_w);

struct RelevanceCache {
  std::vector<double> pooled;
  std::vector<double> hidden_pre;
  std::vector<double> hidden;
  std::vector<double> logits;
  std::vector<double> weights;
};

/// Pooled feature vector -> softmax weights.
RelevanceWeights relevance_forward(const RelevanceNet& net,
                                   std::span<const double> pooled,
                                   RelevanceCache* cache = nullptr);

/// d pooled for upstream d weights; parameter gradients accumulate in `grad`.
std::vector<double> relevance_backward(const RelevanceNet& net,
                                       const RelevanceCache& cache,
                                       std::span<const double> d_weights,
                                       RelevanceNet* grad);

/// Time average of each filter row, then relevance_forward.
RelevanceWeights acoustic_relevance(const Spectrogram& x, const RelevanceNet& net,
                                    RelevanceCache* cache = nullptr);

/// Global average of each map, then relevance_forward.
RelevanceWeights modulation_relevance(const FeatureMaps& p, const RelevanceNet& net,
                                      RelevanceCache* cache = nullptr);

/// y[i][j] = w[i] x[i][j].
Spectrogram apply_acoustic_weights(const Spectrogram& x, const RelevanceWeights& w_a);

/// q[c] = w[c] p[c].
FeatureMaps apply_modulation_weights(const FeatureMaps& p, const RelevanceWeights& w_m);

/// Spreads d pooled back over the rows (or maps) that were averaged.
void add_pooling_backward(std::span<const double> d_pooled, Tensor& d_rep);

}  // namespace relward
