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

// Full network: acoustic filterbank -> acoustic relevance -> instance norm
// -> centre pruning -> modulation conv -> 3x1 pool -> modulation relevance
// -> batch norm -> conv/FC classifier head, with exact reverse-mode
// gradients for every trainable tensor.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relward/acoustic_filterbank.hpp"
#include "relward/dsp_frontend.hpp"
#include "relward/layers.hpp"
#include "relward/modulation_layer.hpp"
#include "relward/normalization.hpp"
#include "relward/relevance.hpp"

namespace relward {

/// System variants: kernel family plus the two relevance switches.
enum class Variant { MFB, MFB_R, A, A_R, A_R_M_R, Sinc, S_R_M_R };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);
const std::vector<Variant>& all_variants();

struct ModelConfig {
  std::size_t filters = kDefaultFilterCount;
  std::size_t kernel_len = kDefaultKernelLength;
  std::size_t frame_len = kFrameLength;
  std::size_t hop = kFrameHop;
  std::size_t frames = kContextFrames;
  std::size_t keep = kKeptFrames;
  double mel_low_hz = kDefaultMelLowHz;
  double mel_high_hz = kDefaultMelHighHz;
  KernelFamily family = KernelFamily::cosine_gaussian;
  bool acoustic_relevance = true;
  bool modulation_relevance = true;
  std::size_t acoustic_hidden = kDefaultAcousticHidden;
  std::size_t modulation_hidden = kDefaultModulationHidden;
  std::size_t mod_filters = kDefaultModulationFilters;
  std::size_t mod_kf = kDefaultModulationKernel;
  std::size_t mod_kt = kDefaultModulationKernel;
  // Instance-norm statistics over the kept frames instead of all frames.
  bool norm_over_kept = false;
  std::size_t head_maps = 16;
  std::size_t head_kernel = 3;
  std::size_t head_pool = 2;
  std::size_t fc1 = 256;
  std::size_t fc2 = 128;
  std::size_t classes = kDefaultClassCount;
};

/// Sets family and relevance switches for a variant.
void apply_variant(ModelConfig& config, Variant variant);
Variant variant_of(const ModelConfig& config);

/// Ordered key=value view of a config, and the inverse. Unknown keys throw.
std::vector<std::pair<std::string, std::string>> config_entries(const ModelConfig& c);
void set_config_value(ModelConfig& c, const std::string& key, const std::string& value);
bool is_model_config_key(const std::string& key);

/// Spatial sizes produced by each stage for a config.
struct StageShapes {
  std::size_t mod_rows, mod_cols;      // after modulation conv
  std::size_t pooled_rows;             // after 3x1 pool
  std::size_t head_rows, head_cols;    // after head pool
  std::size_t flat;                    // head_maps * head_rows * head_cols
};

/// Throws ArgumentError naming the stage whose sizes do not fit.
StageShapes stage_shapes(const ModelConfig& config);

struct ClassifierHead {
  Tensor conv_weight;  // maps x K x kh x kw
  Tensor conv_bias;    // maps
  Dense fc1;
  Dense fc2;
  Dense out;
};

/// Every trainable tensor. The same type, zero-filled, holds gradients.
struct ModelParams {
  FilterbankParams fb;
  RelevanceNet acoustic_net;
  ModulationKernels mod_kernels;
  RelevanceNet mod_net;
  BatchNormState bn;  // only gamma and beta are trainable
  ClassifierHead head;
};

using GradientSet = ModelParams;

struct AcousticModel {
  ModelConfig config;
  ModelParams params;
};

struct InitOptions {
  // Relevance output layers start at zero, so initial weights are uniform.
  bool zero_relevance_output = true;
};

AcousticModel make_model(const ModelConfig& config, std::uint64_t seed,
                         const InitOptions& options = {});

/// Zero tensors shaped like the model's trainable parameters.
GradientSet zero_gradients(const AcousticModel& model);

/// Visits (name, values) for each trainable tensor in a fixed order.
void for_each_parameter(ModelParams& params,
                        const std::function<void(const std::string&, std::span<double>)>& fn);
void for_each_parameter(const ModelParams& params,
                        const std::function<void(const std::string&, std::span<const double>)>& fn);

/// Parameter-group names in visiting order.
std::vector<std::string> parameter_names(const AcousticModel& model);

/// Test hooks that scale the representation entering each weighting stage.
struct ForwardOptions {
  double acoustic_prescale = 1.0;
  double modulation_prescale = 1.0;
};

struct SampleCache {
  AcousticCache acoustic;
  Spectrogram x;
  RelevanceCache acoustic_rel;
  std::vector<double> w_a;
  InstanceNormCache inorm;
  Spectrogram z_kept;
  ModulationCache modulation;
  PooledMaps pooled;
  RelevanceCache mod_rel;
  std::vector<double> w_m;
  Tensor q;
  Tensor bn_out;
  Tensor head_pre;
  PoolResult head_pool;
  std::vector<double> flat;
  std::vector<double> fc1_pre;
  std::vector<double> fc1_act;
  std::vector<double> fc2_pre;
  std::vector<double> fc2_act;
};

struct ForwardCache {
  BatchNormMode mode = BatchNormMode::eval;
  ForwardOptions options;
  KernelBank bank;
  std::vector<SampleCache> samples;
  BatchNormCache bn;
};

struct ForwardResult {
  std::vector<std::vector<double>> logits;
  ForwardCache cache;
};

/// Pure batched forward. Train mode normalises with batch statistics (the
/// running statistics are left untouched; see update_running_stats).
ForwardResult forward(const AcousticModel& model,
                      const std::vector<const RawFrameBlock*>& batch,
                      BatchNormMode mode, const ForwardOptions& options = {});

/// Single block in eval mode.
std::vector<double> forward(const AcousticModel& model, const RawFrameBlock& block);

/// Reverse pass for upstream d logits. d_frames, when non-null, receives the
/// gradient with respect to each block's raw samples.
GradientSet backward(const AcousticModel& model,
                     const std::vector<const RawFrameBlock*>& batch,
                     const ForwardCache& cache,
                     const std::vector<std::vector<double>>& d_logits,
                     std::vector<Tensor>* d_frames = nullptr);

/// -log softmax(logits)[class_id], in nats.
double cross_entropy(std::span<const double> logits, int class_id);

/// d loss / d logits = softmax(logits) - onehot(class_id).
std::vector<double> cross_entropy_gradient(std::span<const double> logits, int class_id);

struct LossResult {
  double loss = 0.0;  // mean over batch
  std::size_t correct = 0;
  GradientSet grads;
  ForwardCache cache;
};

/// Mean cross-entropy over the batch and its gradient.
LossResult loss_and_gradients(const AcousticModel& model,
                              const std::vector<const RawFrameBlock*>& batch,
                              const std::vector<int>& labels, BatchNormMode mode);

/// Mean cross-entropy only.
double batch_loss(const AcousticModel& model,
                  const std::vector<const RawFrameBlock*>& batch,
                  const std::vector<int>& labels, BatchNormMode mode);

/// Single-example gradient in eval mode.
GradientSet backward(const AcousticModel& model, const RawFrameBlock& block, int class_id);

/// Versioned text checkpoint; every tensor in "%.17g".
void save_checkpoint(const std::filesystem::path& path, const AcousticModel& model,
                     std::uint64_t step);
struct Checkpoint {
  AcousticModel model;
  std::uint64_t step = 0;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string serialize_checkpoint(const AcousticModel& model, std::uint64_t step);

/// Replaces mu; throws ContractError when f or k disagree with the model.
void import_filters(AcousticModel& model, const FilterFile& filters);

}  // namespace relward
