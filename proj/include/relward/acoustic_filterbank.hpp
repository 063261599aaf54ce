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

// Parametric first layer: time-domain kernels synthesised from per-filter
// centre frequencies, correlated with raw frames, then squared, averaged
// within each frame and log-compressed into an f x t spectrogram.

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "relward/dsp_frontend.hpp"
#include "relward/tensor.hpp"

namespace relward {

inline constexpr std::size_t kDefaultFilterCount = 80;
inline constexpr std::size_t kDefaultKernelLength = 129;
inline constexpr double kDefaultMelLowHz = 60.0;
inline constexpr double kDefaultMelHighHz = 7800.0;
inline constexpr double kLogFloor = 1e-8;

enum class KernelFamily { cosine_gaussian, sinc, fixed_mel };

std::string_view to_string(KernelFamily family);
KernelFamily parse_kernel_family(std::string_view name);

/// Learnable state of the filterbank. mu is in cycles/sample (Nyquist 0.5).
/// `bandwidth` holds the fixed sinc pass-band widths derived from the mel
/// initialisation; it is ignored by the other families.
struct FilterbankParams {
  std::vector<double> mu;
  KernelFamily family = KernelFamily::cosine_gaussian;
  std::size_t kernel_len = kDefaultKernelLength;
  std::vector<double> bandwidth;

  std::size_t filter_count() const { return mu.size(); }
  bool learnable() const { return family != KernelFamily::fixed_mel; }
};

/// Throws ArgumentError unless kernel_len is odd, 0 < mu <= 0.5 and mu,
/// bandwidth are finite with matching lengths.
void validate(const FilterbankParams& params);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// f centres equally spaced on the mel scale over [fmin, fmax], endpoints
/// included, normalised by fs.
FilterbankParams init_mel(std::size_t filter_count, double fmin_hz,
                          double fmax_hz, double fs_hz,
                          KernelFamily family = KernelFamily::cosine_gaussian,
                          std::size_t kernel_len = kDefaultKernelLength);

struct KernelBank {
  Tensor taps;  // f x k, tap q at time n = q - (k-1)/2

  std::size_t filter_count() const { return taps.dim(0); }
  std::size_t kernel_len() const { return taps.dim(1); }
};

/// cosine_gaussian / fixed_mel: g(n) = cos(2 pi mu n) exp(-n^2 mu^2 / 2).
/// sinc: Hamming-windowed band-pass with edges mu -/+ bandwidth/2.
KernelBank synthesize_kernels(const FilterbankParams& params);

/// d taps / d mu, row-wise. Throws ContractError for fixed_mel.
Tensor kernel_mu_jacobian(const FilterbankParams& params);

enum class SpectrogramStage { x_raw, y_weighted, z_normalized };

struct Spectrogram {
  Tensor values;  // f x t
  SpectrogramStage stage = SpectrogramStage::x_raw;

  std::size_t filter_count() const { return values.dim(0); }
  std::size_t frame_count() const { return values.dim(1); }
};

/// Intermediate state kept by acoustic_forward for the backward pass.
struct AcousticCache {
  // Shared layout: frames are contiguous slices of one signal, so the
  // correlation is computed once over that signal (f x positions).
  // Otherwise one row per (filter, frame) pair: (f * t) x (s - k + 1).
  bool shared = false;
  std::vector<double> signal;
  Tensor correlation;
  Tensor energy;  // f x t, mean squared correlation before the log floor
  std::size_t outputs_per_frame = 0;
};

/// x[i][j] = log(mean_m(c_ij[m]^2) + kLogFloor) with c_ij the valid-mode
/// correlation of frame j with kernel i.
Spectrogram acoustic_forward(const RawFrameBlock& block, const KernelBank& bank,
                             AcousticCache* cache = nullptr);

/// Back-propagates d_x (f x t). Either output pointer may be null.
void acoustic_backward(const RawFrameBlock& block, const KernelBank& bank,
                       const AcousticCache& cache, const Tensor& d_x,
                       Tensor* d_taps, Tensor* d_frames);

/// Chains d taps through kernel_mu_jacobian into one value per filter.
std::vector<double> mu_gradient(const FilterbankParams& params,
                                const Tensor& d_taps);

/// Plain-text filter file: "family f k" then f lines of mu in "%.17g".
void write_filters(const std::filesystem::path& path,
                   const FilterbankParams& params);

struct FilterFile {
  KernelFamily family = KernelFamily::cosine_gaussian;
  std::size_t kernel_len = 0;
  std::vector<double> mu;
};

FilterFile read_filters(const std::filesystem::path& path);

}  // namespace relward
