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

#include "relward/acoustic_filterbank.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <sstream>

#include "relward/errors.hpp"
#include "relward/io.hpp"

namespace relward {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr std::size_t kTile = 16;

// out[m] = sum_q x[m + q] * g[q] for m < n_out. Accumulation runs over q in
// ascending order for every output, whatever the chunking.
void correlate_valid(const double* x, std::size_t n_out, const double* g,
                     std::size_t k, double* out) {
  std::size_t base = 0;
  for (; base + kTile <= n_out; base += kTile) {
    double acc[kTile] = {};
    for (std::size_t q = 0; q < k; ++q) {
      const double gq = g[q];
      const double* xq = x + base + q;
      for (std::size_t u = 0; u < kTile; ++u) acc[u] += gq * xq[u];
    }
    std::copy(acc, acc + kTile, out + base);
  }
  for (; base < n_out; ++base) {
    double acc = 0.0;
    for (std::size_t q = 0; q < k; ++q) acc += g[q] * x[base + q];
    out[base] = acc;
  }
}

// grad[q] += sum_m dc[m] * x[m + q]
void accumulate_kernel_grad(const double* x, const double* dc,
                            std::size_t n_out, std::size_t k, double* grad) {
  std::size_t qb = 0;
  for (; qb + kTile <= k; qb += kTile) {
    double acc[kTile] = {};
    for (std::size_t m = 0; m < n_out; ++m) {
      const double d = dc[m];
      const double* xm = x + m + qb;
      for (std::size_t u = 0; u < kTile; ++u) acc[u] += d * xm[u];
    }
    for (std::size_t u = 0; u < kTile; ++u) grad[qb + u] += acc[u];
  }
  for (; qb < k; ++qb) {
    double acc = 0.0;
    for (std::size_t m = 0; m < n_out; ++m) acc += dc[m] * x[m + qb];
    grad[qb] += acc;
  }
}

// Frames are slices of a single signal when every overlap agrees bit-for-bit
// and consecutive valid output ranges touch or overlap.
bool frames_are_contiguous(const RawFrameBlock& block, std::size_t outputs) {
  const std::size_t t = block.frame_count();
  const std::size_t s = block.frame_len;
  const std::size_t hop = block.hop;
  if (t < 2 || hop == 0 || hop >= s || hop > outputs) return false;
  for (std::size_t j = 1; j < t; ++j) {
    const double* prev = block.frames.row(j - 1);
    const double* cur = block.frames.row(j);
    if (std::memcmp(prev + hop, cur, (s - hop) * sizeof(double)) != 0) return false;
  }
  return true;
}

double sinc_lowpass(double cutoff, double n) {
  // 2 fc sinc(2 fc n); value at n = 0 is 2 fc.
  if (n == 0.0) return 2.0 * cutoff;
  return std::sin(2.0 * kPi * cutoff * n) / (kPi * n);
}

struct SincEdges {
  double lower;
  double upper;
  bool lower_free;
  bool upper_free;
};

SincEdges sinc_edges(double mu, double band) {
  SincEdges e{mu - 0.5 * band, mu + 0.5 * band, true, true};
  if (e.lower < 0.0) {
    e.lower = 0.0;
    e.lower_free = false;
  }
  if (e.upper > 0.5) {
    e.upper = 0.5;
    e.upper_free = false;
  }
  return e;
}

double hamming(std::size_t q, std::size_t k) {
  if (k == 1) return 1.0;
  return 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(q) /
                                static_cast<double>(k - 1));
}

}  // namespace

std::string_view to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::cosine_gaussian: return "cosine_gaussian";
    case KernelFamily::sinc: return "sinc";
    case KernelFamily::fixed_mel: return "fixed_mel";
  }
  return "unknown";
}

KernelFamily parse_kernel_family(std::string_view name) {
  if (name == "cosine_gaussian") return KernelFamily::cosine_gaussian;
  if (name == "sinc") return KernelFamily::sinc;
  if (name == "fixed_mel") return KernelFamily::fixed_mel;
  throw ArgumentError("unknown kernel family '" + std::string(name) + "'");
}

void validate(const FilterbankParams& params) {
  if (params.mu.empty()) throw ArgumentError("filterbank: no filters");
  if (params.kernel_len == 0 || params.kernel_len % 2 == 0) {
    throw ArgumentError("filterbank: kernel length must be odd, got " +
                        std::to_string(params.kernel_len));
  }
  for (std::size_t i = 0; i < params.mu.size(); ++i) {
    const double m = params.mu[i];
    if (!std::isfinite(m) || m <= 0.0 || m > 0.5) {
      throw ArgumentError("filterbank: mu[" + std::to_string(i) + "]=" +
                          format_double(m) + " outside (0, 0.5]");
    }
  }
  if (params.family == KernelFamily::sinc &&
      params.bandwidth.size() != params.mu.size()) {
    throw ArgumentError("filterbank: sinc family needs one bandwidth per filter");
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

FilterbankParams init_mel(std::size_t filter_count, double fmin_hz,
                          double fmax_hz, double fs_hz, KernelFamily family,
                          std::size_t kernel_len) {
  if (filter_count == 0) throw ArgumentError("init_mel: filter count must be positive");
  if (!(fs_hz > 0.0) || !(fmin_hz > 0.0) || !(fmin_hz < fmax_hz) ||
      !(fmax_hz <= fs_hz / 2.0)) {
    throw ArgumentError("init_mel: need 0 < fmin < fmax <= fs/2, got fmin=" +
                        format_double(fmin_hz) + " fmax=" + format_double(fmax_hz) +
                        " fs=" + format_double(fs_hz));
  }
  FilterbankParams p;
  p.family = family;
  p.kernel_len = kernel_len;
  const double lo = hz_to_mel(fmin_hz);
  const double hi = hz_to_mel(fmax_hz);
  std::vector<double> hz(filter_count);
  for (std::size_t i = 0; i < filter_count; ++i) {
    if (filter_count == 1) {
      hz[i] = fmin_hz;
    } else if (i == 0) {
      hz[i] = fmin_hz;
    } else if (i + 1 == filter_count) {
      hz[i] = fmax_hz;
    } else {
      const double frac = static_cast<double>(i) / static_cast<double>(filter_count - 1);
      hz[i] = mel_to_hz(lo + frac * (hi - lo));
    }
  }
  p.mu.resize(filter_count);
  p.bandwidth.resize(filter_count);
  for (std::size_t i = 0; i < filter_count; ++i) {
    p.mu[i] = hz[i] / fs_hz;
    double spacing;
    if (filter_count == 1) {
      spacing = fmin_hz;
    } else if (i == 0) {
      spacing = hz[1] - hz[0];
    } else if (i + 1 == filter_count) {
      spacing = hz[i] - hz[i - 1];
    } else {
      spacing = 0.5 * (hz[i + 1] - hz[i - 1]);
    }
    p.bandwidth[i] = spacing / fs_hz;
  }
  validate(p);
  return p;
}

KernelBank synthesize_kernels(const FilterbankParams& params) {
  validate(params);
  const std::size_t f = params.filter_count();
  const std::size_t k = params.kernel_len;
  const auto half = static_cast<double>((k - 1) / 2);
  KernelBank bank{Tensor({f, k})};
  for (std::size_t i = 0; i < f; ++i) {
    const double mu = params.mu[i];
    double* row = bank.taps.row(i);
    if (params.family == KernelFamily::sinc) {
      const SincEdges e = sinc_edges(mu, params.bandwidth[i]);
      for (std::size_t q = 0; q < k; ++q) {
        const double n = static_cast<double>(q) - half;
        row[q] = (sinc_lowpass(e.upper, n) - sinc_lowpass(e.lower, n)) * hamming(q, k);
      }
    } else {
      for (std::size_t q = 0; q < k; ++q) {
        const double n = static_cast<double>(q) - half;
        row[q] = std::cos(2.0 * kPi * mu * n) * std::exp(-n * n * mu * mu / 2.0);
      }
    }
  }
  return bank;
}

Tensor kernel_mu_jacobian(const FilterbankParams& params) {
  validate(params);
  if (!params.learnable()) {
    throw ContractError("kernel_mu_jacobian: family fixed_mel has no learnable mu");
  }
  const std::size_t f = params.filter_count();
  const std::size_t k = params.kernel_len;
  const auto half = static_cast<double>((k - 1) / 2);
  Tensor jac({f, k});
  for (std::size_t i = 0; i < f; ++i) {
    const double mu = params.mu[i];
    double* row = jac.row(i);
    if (params.family == KernelFamily::sinc) {
      const SincEdges e = sinc_edges(mu, params.bandwidth[i]);
      for (std::size_t q = 0; q < k; ++q) {
        const double n = static_cast<double>(q) - half;
        double d = 0.0;
        if (e.upper_free) d += 2.0 * std::cos(2.0 * kPi * e.upper * n);
        if (e.lower_free) d -= 2.0 * std::cos(2.0 * kPi * e.lower * n);
        row[q] = d * hamming(q, k);
      }
    } else {
      for (std::size_t q = 0; q < k; ++q) {
        const double n = static_cast<double>(q) - half;
        const double phase = 2.0 * kPi * mu * n;
        row[q] = (-2.0 * kPi * n * std::sin(phase) - n * n * mu * std::cos(phase)) *
                 std::exp(-n * n * mu * mu / 2.0);
      }
    }
  }
  return jac;
}

Spectrogram acoustic_forward(const RawFrameBlock& block, const KernelBank& bank,
                             AcousticCache* cache) {
  const std::size_t s = block.frame_len;
  const std::size_t k = bank.kernel_len();
  if (block.frames.rank() != 2 || block.frames.dim(1) != s) {
    throw ArgumentError("acoustic_forward: frame block is not t x s");
  }
  if (s < k) {
    throw ArgumentError("acoustic_forward: frame length " + std::to_string(s) +
                        " shorter than kernel length " + std::to_string(k));
  }
  const std::size_t f = bank.filter_count();
  const std::size_t t = block.frame_count();
  const std::size_t outputs = s - k + 1;
  const double inv_outputs = 1.0 / static_cast<double>(outputs);

  AcousticCache local;
  AcousticCache& c = cache ? *cache : local;
  c.outputs_per_frame = outputs;
  c.energy = Tensor({f, t});
  c.shared = frames_are_contiguous(block, outputs);

  Spectrogram x{Tensor({f, t}), SpectrogramStage::x_raw};
  if (c.shared) {
    const std::size_t hop = block.hop;
    const std::size_t length = (t - 1) * hop + s;
    c.signal.resize(length);
    for (std::size_t j = 0; j < t; ++j) {
      std::memcpy(c.signal.data() + j * hop, block.frames.row(j), s * sizeof(double));
    }
    const std::size_t positions = length - k + 1;
    c.correlation = Tensor({f, positions});
    for (std::size_t i = 0; i < f; ++i) {
      double* corr = c.correlation.row(i);
      correlate_valid(c.signal.data(), positions, bank.taps.row(i), k, corr);
      for (std::size_t j = 0; j < t; ++j) {
        const double* cj = corr + j * hop;
        double acc = 0.0;
        for (std::size_t m = 0; m < outputs; ++m) acc += cj[m] * cj[m];
        const double e = acc * inv_outputs;
        c.energy.at(i, j) = e;
        x.values.at(i, j) = std::log(e + kLogFloor);
      }
    }
  } else {
    c.signal.clear();
    c.correlation = Tensor({f * t, outputs});
    for (std::size_t i = 0; i < f; ++i) {
      for (std::size_t j = 0; j < t; ++j) {
        double* cj = c.correlation.row(i * t + j);
        correlate_valid(block.frames.row(j), outputs, bank.taps.row(i), k, cj);
        double acc = 0.0;
        for (std::size_t m = 0; m < outputs; ++m) acc += cj[m] * cj[m];
        const double e = acc * inv_outputs;
        c.energy.at(i, j) = e;
        x.values.at(i, j) = std::log(e + kLogFloor);
      }
    }
  }
  return x;
}

void acoustic_backward(const RawFrameBlock& block, const KernelBank& bank,
                       const AcousticCache& cache, const Tensor& d_x,
                       Tensor* d_taps, Tensor* d_frames) {
  const std::size_t f = bank.filter_count();
  const std::size_t k = bank.kernel_len();
  const std::size_t t = block.frame_count();
  const std::size_t s = block.frame_len;
  const std::size_t outputs = cache.outputs_per_frame;
  if (cache.energy.empty() || cache.energy.dim(0) != f || cache.energy.dim(1) != t) {
    throw ContractError("acoustic_backward: cache does not match this block");
  }
  if (d_x.rank() != 2 || d_x.dim(0) != f || d_x.dim(1) != t) {
    throw ContractError("acoustic_backward: upstream gradient is not f x t");
  }
  if (d_taps) *d_taps = Tensor({f, k});
  if (d_frames) *d_frames = Tensor({t, s});

  // dL/dc_ij[m] = scale_ij * c_ij[m]
  const double inv_outputs = 1.0 / static_cast<double>(outputs);
  auto scale = [&](std::size_t i, std::size_t j) {
    return 2.0 * d_x.at(i, j) * inv_outputs / (cache.energy.at(i, j) + kLogFloor);
  };

  std::vector<double> dc;
  for (std::size_t i = 0; i < f; ++i) {
    if (cache.shared) {
      const std::size_t hop = block.hop;
      const double* corr = cache.correlation.row(i);
      const std::size_t positions = cache.correlation.dim(1);
      if (d_taps) {
        dc.assign(positions, 0.0);
        for (std::size_t j = 0; j < t; ++j) {
          const double a = scale(i, j);
          double* dcj = dc.data() + j * hop;
          const double* cj = corr + j * hop;
          for (std::size_t m = 0; m < outputs; ++m) dcj[m] += a * cj[m];
        }
        accumulate_kernel_grad(cache.signal.data(), dc.data(), positions, k,
                               d_taps->row(i));
      }
      if (d_frames) {
        dc.resize(outputs);
        for (std::size_t j = 0; j < t; ++j) {
          const double a = scale(i, j);
          const double* cj = corr + j * block.hop;
          for (std::size_t m = 0; m < outputs; ++m) dc[m] = a * cj[m];
          double* df = d_frames->row(j);
          const double* g = bank.taps.row(i);
          for (std::size_t m = 0; m < outputs; ++m) {
            const double d = dc[m];
            for (std::size_t q = 0; q < k; ++q) df[m + q] += d * g[q];
          }
        }
      }
    } else {
      dc.resize(outputs);
      for (std::size_t j = 0; j < t; ++j) {
        const double a = scale(i, j);
        const double* cj = cache.correlation.row(i * t + j);
        for (std::size_t m = 0; m < outputs; ++m) dc[m] = a * cj[m];
        if (d_taps) {
          accumulate_kernel_grad(block.frames.row(j), dc.data(), outputs, k,
                                 d_taps->row(i));
        }
        if (d_frames) {
          double* df = d_frames->row(j);
          const double* g = bank.taps.row(i);
          for (std::size_t m = 0; m < outputs; ++m) {
            const double d = dc[m];
            for (std::size_t q = 0; q < k; ++q) df[m + q] += d * g[q];
          }
        }
      }
    }
  }
}

std::vector<double> mu_gradient(const FilterbankParams& params,
                                const Tensor& d_taps) {
  const Tensor jac = kernel_mu_jacobian(params);
  if (!jac.same_shape(d_taps)) {
    throw ContractError("mu_gradient: tap gradient shape " + d_taps.shape_string() +
                        " does not match bank " + jac.shape_string());
  }
  std::vector<double> out(params.filter_count(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double* d = d_taps.row(i);
    const double* j = jac.row(i);
    double acc = 0.0;
    for (std::size_t q = 0; q < params.kernel_len; ++q) acc += d[q] * j[q];
    out[i] = acc;
  }
  return out;
}

void write_filters(const std::filesystem::path& path,
                   const FilterbankParams& params) {
  std::string out;
  out += std::string(to_string(params.family)) + " " +
         std::to_string(params.filter_count()) + " " +
         std::to_string(params.kernel_len) + "\n";
  for (double m : params.mu) out += format_double(m) + "\n";
  write_file_atomic(path, out);
}

FilterFile read_filters(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string family;
  long long f = -1;
  long long k = -1;
  if (!(in >> family >> f >> k) || f <= 0 || k <= 0) {
    throw FormatError(path.string() + ": header must be 'family f k'");
  }
  FilterFile file;
  file.family = parse_kernel_family(family);
  file.kernel_len = static_cast<std::size_t>(k);
  file.mu.reserve(static_cast<std::size_t>(f));
  std::string token;
  while (in >> token) file.mu.push_back(parse_double(token));
  if (file.mu.size() != static_cast<std::size_t>(f)) {
    throw FormatError(path.string() + ": header declares " + std::to_string(f) +
                      " filters but file holds " + std::to_string(file.mu.size()));
  }
  return file;
}

}  // namespace relward
