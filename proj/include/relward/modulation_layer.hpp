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

// Second convolutional layer: K spectro-temporal kernels correlated with the
// normalised spectrogram (valid mode, stride 1, rectified), then a 3 x 1
// max-pool along frequency.

#pragma once

#include <cstddef>
#include <vector>

#include "relward/rng.hpp"
#include "relward/tensor.hpp"

namespace relward {

struct Spectrogram;

inline constexpr std::size_t kDefaultModulationFilters = 40;
inline constexpr std::size_t kDefaultModulationKernel = 5;
inline constexpr std::size_t kPoolWindowFrequency = 3;

struct ModulationKernels {
  Tensor kernels;  // K x kf x kt
  Tensor bias;     // K

  std::size_t count() const { return kernels.dim(0); }
  std::size_t span_f() const { return kernels.dim(1); }
  std::size_t span_t() const { return kernels.dim(2); }
};

ModulationKernels make_modulation_kernels(std::size_t count, std::size_t kf,
                                          std::size_t kt, Rng& rng);

enum class FeatureStage { p_conv, p_pooled, q_weighted };

struct FeatureMaps {
  Tensor maps;  // K x f' x t'
  FeatureStage stage = FeatureStage::p_conv;

  std::size_t map_count() const { return maps.dim(0); }
  std::size_t rows() const { return maps.dim(1); }
  std::size_t cols() const { return maps.dim(2); }
};

struct ModulationCache {
  Tensor pre_activation;  // K x f' x t'
};

FeatureMaps modulation_forward(const Spectrogram& z, const ModulationKernels& kernels,
                               ModulationCache* cache = nullptr);

/// Gradients w.r.t. kernels/bias accumulate in `grad` (may be null);
/// d z is written to `d_z` when non-null.
void modulation_backward(const Spectrogram& z, const ModulationKernels& kernels,
                         const ModulationCache& cache, const Tensor& d_p,
                         ModulationKernels* grad, Tensor* d_z);

struct PooledMaps {
  FeatureMaps maps;
  std::vector<std::size_t> argmax;
  std::vector<std::size_t> input_shape;
};

/// Window 3 along frequency, 1 along time, stride (3, 1); f' = floor(f / 3).
PooledMaps max_pool_3x1(const FeatureMaps& p);

Tensor max_pool_3x1_backward(const PooledMaps& pooled, const Tensor& d_out);

}  // namespace relward
