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

// Datasets, the training loop, SNR-sweep evaluation, finite-difference
// gradient checking and the filter transfer experiment.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "relward/adam.hpp"
#include "relward/dsp_frontend.hpp"
#include "relward/model.hpp"

namespace relward {

inline constexpr std::string_view kArtifactVersion = "relward 1.0.0";

/// Small model used by the gradient suite and the pipeline oracle.
ModelConfig tiny_config();
/// Reduced model sized for single-core training runs.
ModelConfig desk_config();
/// Named preset: "full", "desk" or "tiny".
ModelConfig preset_config(const std::string& name);

struct TrainConfig {
  std::string preset = "full";
  ModelConfig model;
  std::size_t batch = 16;
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  std::filesystem::path data;       // training manifest
  std::filesystem::path eval_data;  // optional evaluation manifest
  bool freeze_filters = false;
  std::vector<double> eval_snrs = {kCleanSnr};
  NoiseKind noise = NoiseKind::white;
};

/// Ordered key=value view for reproducibility records, and the inverse.
/// Model keys are accepted too. Unknown keys throw ArgumentError.
std::vector<std::pair<std::string, std::string>> train_config_entries(const TrainConfig& c);
void set_train_value(TrainConfig& c, const std::string& key, const std::string& value);

/// Parses "key=value" lines ('#' starts a comment). preset applies first,
/// then variant, then the remaining keys in file order.
std::vector<std::pair<std::string, std::string>> read_config_file(
    const std::filesystem::path& path);
void apply_config(TrainConfig& c, const std::vector<std::pair<std::string, std::string>>& kv);

std::string format_snr_list(const std::vector<double>& snrs);
std::vector<double> parse_snr_list(const std::string& text);

struct SynthConfig {
  std::size_t count = 64;
  std::uint64_t seed = 0;
  int table_id = 0;
  int classes = kDefaultClassCount;
  // Clip i is mixed at snrs[(i / classes) % snrs.size()], so every class
  // sees every condition equally often.
  std::vector<double> snrs = {kCleanSnr};
  NoiseKind noise = NoiseKind::white;
};

/// Clip i has class i % classes and clip seed derived from (seed, i).
std::vector<LabeledClip> synthesize_dataset(const SynthConfig& config);

/// Writes clips/clip_NNNNN.wav and manifest.tsv under dir; returns the
/// manifest path.
std::filesystem::path write_dataset(const std::filesystem::path& dir,
                                    const std::vector<LabeledClip>& clips);

struct Example {
  RawFrameBlock block;
  int class_id = 0;
};

struct Dataset {
  std::vector<Example> examples;
  std::size_t size() const { return examples.size(); }
};

/// Centre block of a clip under the given model framing.
RawFrameBlock center_block(const SampleBuffer& buffer, const ModelConfig& config);

/// Reads every clip of a manifest. When snr_db is finite, seeded noise is
/// mixed in first; clip i always receives the same noise realisation.
Dataset load_dataset(const std::filesystem::path& manifest, const ModelConfig& config,
                     double snr_db = kCleanSnr, NoiseKind noise = NoiseKind::white,
                     std::uint64_t noise_seed = 0);
Dataset make_dataset(const std::vector<LabeledClip>& clips, const ModelConfig& config,
                     double snr_db = kCleanSnr, NoiseKind noise = NoiseKind::white,
                     std::uint64_t noise_seed = 0);

struct MetricRow {
  std::size_t epoch = 0;
  std::string split;  // "train", "eval" or "eval_snr<dB>"
  double loss = 0.0;
  double accuracy = 0.0;
};

std::string metrics_csv(const std::vector<MetricRow>& rows);

struct EvalResult {
  double snr_db = kCleanSnr;
  double loss = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

/// Eval-mode loss and accuracy over a dataset.
EvalResult evaluate(const AcousticModel& model, const Dataset& data,
                    std::size_t batch = 32);

struct EvalSet {
  double snr_db = kCleanSnr;
  Dataset data;
};

/// One dataset per requested SNR, noise seeded from `seed`.
std::vector<EvalSet> build_eval_sets(const std::filesystem::path& manifest,
                                     const ModelConfig& config,
                                     const std::vector<double>& snrs, NoiseKind noise,
                                     std::uint64_t seed);
std::vector<EvalSet> build_eval_sets(const std::vector<LabeledClip>& clips,
                                     const ModelConfig& config,
                                     const std::vector<double>& snrs, NoiseKind noise,
                                     std::uint64_t seed);

std::string split_name(double snr_db);

struct TrainResult {
  AcousticModel model;
  AdamState optimizer;
  std::vector<MetricRow> metrics;
  std::size_t mu_clip_events = 0;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Deterministic given (config, seed, data). Throws DataError on an empty
/// dataset and ArgumentError for batch < 2.
TrainResult train(const TrainConfig& config, const Dataset& train_set,
                  const std::vector<EvalSet>& eval_sets = {},
                  const std::optional<FilterFile>& initial_filters = std::nullopt,
                  const ProgressFn& progress = {});

/// Loads the manifests named in the config and trains.
TrainResult train(const TrainConfig& config, const ProgressFn& progress = {});

struct GradCheckGroup {
  std::string name;
  std::size_t checked = 0;
  double max_error = 0.0;  // max |analytic - fd| / max(1, |analytic|)
  std::size_t worst_index = 0;
  bool pass = true;
};

struct GradCheckReport {
  double tol = 0.0;
  std::vector<GradCheckGroup> groups;
  bool pass = true;
};

struct GradCheckOptions {
  double tol = 1e-4;
  BatchNormMode mode = BatchNormMode::train;
  // 0 checks every entry; otherwise at most this many, evenly strided.
  std::size_t max_entries_per_group = 0;
  // Replaces the analytic gradient (test fixture for harness sanity).
  const GradientSet* analytic_override = nullptr;
};

/// Central finite differences of the mean batch loss, step
/// h = cbrt(eps) * max(1, |theta|), against the analytic gradient.
GradCheckReport grad_check(const AcousticModel& model,
                           const std::vector<const RawFrameBlock*>& batch,
                           const std::vector<int>& labels, const GradCheckOptions& options);

std::string format_report(const GradCheckReport& report);

struct TransferRow {
  std::string filters_from;  // "scratch" for the control
  double snr_db = kCleanSnr;
  double accuracy = 0.0;
};

struct TransferSource {
  std::string label;
  FilterFile filters;
};

/// Throws ContractError when a source's f or k differs from the config.
void check_transfer_compatible(const std::vector<TransferSource>& sources,
                               const ModelConfig& config);

/// Trains a from-scratch control plus one model per source with mu imported
/// (frozen when config.freeze_filters). Incompatible f or k throws
/// ContractError before any training.
std::vector<TransferRow> transfer_experiment(const std::vector<TransferSource>& sources,
                                             const TrainConfig& config,
                                             const Dataset& train_set,
                                             const std::vector<EvalSet>& eval_sets,
                                             const ProgressFn& progress = {});

std::string transfer_csv(const std::vector<TransferRow>& rows);

/// Permutation of [0, n) from a Fisher-Yates shuffle with the given stream.
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

}  // namespace relward
