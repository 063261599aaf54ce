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

// Per-utterance instance normalisation of the weighted spectrogram with
// centre-frame pruning, and batch normalisation of the weighted modulation
// maps with frozen running statistics at test time.

#pragma once

#include <cstddef>
#include <vector>

#include "relward/acoustic_filterbank.hpp"
#include "relward/modulation_layer.hpp"
#include "relward/tensor.hpp"

namespace relward {

inline constexpr double kNormStabilizer = 1e-4;
inline constexpr std::size_t kKeptFrames = 21;

struct InstanceNormCache {
  std::vector<double> inv_std;  // per row
  Tensor normalized;            // z
};

/// z[i][j] = (y[i][j] - m_i) / sqrt(var_i + c), population variance over j.
Spectrogram instance_norm(const Spectrogram& y, double c = kNormStabilizer,
                          InstanceNormCache* cache = nullptr);

Tensor instance_norm_backward(const InstanceNormCache& cache, const Tensor& d_z);

/// Keeps columns [(t - keep) / 2, (t + keep) / 2).
Spectrogram prune_center(const Spectrogram& z, std::size_t keep);

/// Scatters d of the pruned columns back into a full-width zero tensor.
Tensor prune_center_backward(const Tensor& d_pruned, std::size_t full_frames);

enum class BatchNormMode { train, eval };

struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;
  std::vector<double> gamma;
  std::vector<double> beta;
  double momentum = 0.1;
  double eps = kNormStabilizer;
  BatchNormMode mode = BatchNormMode::train;

  std::size_t channels() const { return gamma.size(); }
};

/// running_mean = 0, running_var = 1, gamma = 1, beta = 0.
BatchNormState make_batch_norm(std::size_t channels);

struct BatchNormCache {
  BatchNormMode mode = BatchNormMode::eval;
  std::vector<double> mean;     // statistics actually used, per channel
  std::vector<double> var;
  std::vector<double> inv_std;
  std::vector<Tensor> normalized;  // x-hat per sample
  std::size_t count_per_channel = 0;
};

/// Pure forward over a batch of K x f' x t' maps. In train mode the batch
/// statistics are used (and recorded in the cache); in eval mode only the
/// running statistics are read.
std::vector<Tensor> batch_norm_forward(const std::vector<const Tensor*>& batch,
                                       const BatchNormState& state,
                                       BatchNormMode mode, BatchNormCache* cache);

/// Folds the cached batch statistics into the running estimates.
void update_running_stats(BatchNormState& state, const BatchNormCache& cache);

/// Returns d input per sample; d gamma / d beta accumulate when non-null.
std::vector<Tensor> batch_norm_backward(const BatchNormState& state,
                                        const BatchNormCache& cache,
                                        const std::vector<Tensor>& d_out,
                                        std::vector<double>* d_gamma,
                                        std::vector<double>* d_beta);

/// Stateful convenience wrapper following state.mode: normalises and, in
/// train mode, updates the running statistics.
std::vector<FeatureMaps> batch_norm(const std::vector<FeatureMaps>& batch,
                                    BatchNormState& state);

}  // namespace relward
