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

// Audio ingestion and synthesis: 16 kHz mono PCM, noise mixing at a target
// SNR, and framing of raw samples into the t x s blocks the network reads.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "relward/tensor.hpp"

namespace relward {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kFrameLength = 400;  // 25 ms
inline constexpr std::size_t kFrameHop = 160;     // 10 ms
inline constexpr std::size_t kContextFrames = 101;
inline constexpr int kDefaultClassCount = 8;
inline constexpr double kClipSeconds = 1.2;
inline constexpr double kCleanSnr = std::numeric_limits<double>::infinity();

struct SampleBuffer {
  std::vector<double> samples;
  int sample_rate = kSampleRate;
};

/// t x s matrix of raw samples. Row j starts `hop` samples after row j-1.
struct RawFrameBlock {
  Tensor frames;
  std::size_t frame_len = 0;
  std::size_t hop = 0;
  std::size_t center_index = 0;

  std::size_t frame_count() const { return frames.dim(0); }
};

struct LabeledClip {
  SampleBuffer buffer;
  int class_id = 0;
  std::optional<double> snr_db;  // empty for clean clips
};

/// Reads RIFF/WAVE PCM 16-bit mono 16 kHz. Samples are scaled by 1/32768.
SampleBuffer read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM; samples are rounded and saturated to int16.
void write_wav(const std::filesystem::path& path, const SampleBuffer& buffer);

/// First sample of frame 0 such that the centre frame is centred on
/// `center_sample`. May be negative; frame_signal zero-pads.
std::int64_t frame_start_for_center(std::size_t frame_len, std::size_t hop,
                                    std::size_t frame_count,
                                    std::int64_t center_sample);

/// Cuts `frame_count` frames of `frame_len` samples, `hop` apart, with the
/// centre frame centred on `center_sample`. Out-of-range samples read as 0.
RawFrameBlock frame_signal(const SampleBuffer& buffer, std::size_t frame_len,
                           std::size_t hop, std::size_t frame_count,
                           std::int64_t center_sample);

/// Same, but with frame 0 starting at `start` directly.
RawFrameBlock frame_signal_from(const SampleBuffer& buffer,
                                std::size_t frame_len, std::size_t hop,
                                std::size_t frame_count, std::int64_t start);

/// Per-class pair of formant frequencies (Hz).
struct FormantPair {
  double first_hz;
  double second_hz;
};

/// The built-in class table. `table_id` selects one of two disjoint tables
/// (0 = primary, 1 = alternate) used for transfer experiments.
const std::vector<FormantPair>& formant_table(int table_id = 0);

struct ClipSpec {
  int class_id = 0;
  std::uint64_t seed = 0;
  int table_id = 0;
};

/// Deterministic synthetic clip of kClipSeconds: two formant tones under a
/// glottal-rate and a 3-6 Hz syllable-rate amplitude modulation, plus a weaker
/// steady distractor tone, under a raised-cosine onset and offset, normalised
/// to a random peak <= 0.9.
LabeledClip synthesize_clip(const ClipSpec& spec);

enum class NoiseKind { white, pink };

/// Seeded unit-variance noise of the requested spectral shape.
SampleBuffer make_noise(NoiseKind kind, std::size_t length, std::uint64_t seed);

/// Mean square over the whole buffer.
double signal_power(const std::vector<double>& samples);

/// Gain applied to `noise` so that clean/noise power ratio equals snr_db.
double noise_gain(const SampleBuffer& clean, const SampleBuffer& noise,
                  double snr_db);

/// clean + g * noise with g from noise_gain; noise is tiled when shorter.
/// snr_db == +inf returns clean unchanged.
SampleBuffer mix_noise(const SampleBuffer& clean, const SampleBuffer& noise,
                       double snr_db);

struct ManifestEntry {
  std::filesystem::path path;
  int class_id = 0;
  double snr_db = kCleanSnr;
};

/// Tab-separated "path<TAB>class_id<TAB>snr_db". Relative paths are resolved
/// against the manifest's directory. "inf" denotes clean.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestEntry>& entries);

std::string format_snr(double snr_db);
double parse_snr(const std::string& text);

}  // namespace relward
