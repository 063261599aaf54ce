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

#include "relward/normalization.hpp"

#include <cmath>

#include "relward/errors.hpp"

namespace relward {

Spectrogram instance_norm(const Spectrogram& y, double c, InstanceNormCache* cache) {
  const std::size_t f = y.filter_count();
  const std::size_t t = y.frame_count();
  if (t < 2) throw ArgumentError("instance_norm: need at least 2 frames, got " + std::to_string(t));
  Spectrogram z{Tensor({f, t}), SpectrogramStage::z_normalized};
  std::vector<double> inv_std(f);
  const double inv_t = 1.0 / static_cast<double>(t);
  for (std::size_t i = 0; i < f; ++i) {
    const double* r = y.values.row(i);
    double* out = z.values.row(i);
    // Centre on the first element before averaging; a row offset then
    // cancels before any rounding of the mean.
    const double pivot = r[0];
    double mean = 0.0;
    for (std::size_t j = 0; j < t; ++j) mean += r[j] - pivot;
    mean *= inv_t;
    double var = 0.0;
    for (std::size_t j = 0; j < t; ++j) {
      out[j] = (r[j] - pivot) - mean;
      var += out[j] * out[j];
    }
    var *= inv_t;
    inv_std[i] = 1.0 / std::sqrt(var + c);
    for (std::size_t j = 0; j < t; ++j) out[j] *= inv_std[i];
  }
  if (cache) {
    cache->inv_std = std::move(inv_std);
    cache->normalized = z.values;
  }
  return z;
}

namespace {

// d x = r (d xhat - mean(d xhat) - xhat mean(d xhat * xhat)) over one group.
void normalized_group_backward(const double* xhat, const double* d_xhat,
                               std::size_t n, double inv_std, double* d_x) {
  double mean_d = 0.0;
  double mean_dx = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    mean_d += d_xhat[j];
    mean_dx += d_xhat[j] * xhat[j];
  }
  mean_d /= static_cast<double>(n);
  mean_dx /= static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) {
    d_x[j] = inv_std * (d_xhat[j] - mean_d - xhat[j] * mean_dx);
  }
}

}  // namespace

Tensor instance_norm_backward(const InstanceNormCache& cache, const Tensor& d_z) {
  if (!cache.normalized.same_shape(d_z)) {
    throw ContractError("instance_norm_backward: missing or mismatched cache");
  }
  const std::size_t f = d_z.dim(0);
  const std::size_t t = d_z.dim(1);
  Tensor d_y({f, t});
  for (std::size_t i = 0; i < f; ++i) {
    normalized_group_backward(cache.normalized.row(i), d_z.row(i), t,
                              cache.inv_std[i], d_y.row(i));
  }
  return d_y;
}

Spectrogram prune_center(const Spectrogram& z, std::size_t keep) {
  const std::size_t t = z.frame_count();
  if (keep == 0 || keep % 2 == 0 || keep > t) {
    throw ArgumentError("prune_center: keep must be odd and <= " + std::to_string(t) +
                        ", got " + std::to_string(keep));
  }
  const std::size_t first = (t - keep) / 2;
  const std::size_t f = z.filter_count();
  Spectrogram out{Tensor({f, keep}), z.stage};
  for (std::size_t i = 0; i < f; ++i) {
    const double* r = z.values.row(i) + first;
    double* o = out.values.row(i);
    for (std::size_t j = 0; j < keep; ++j) o[j] = r[j];
  }
  return out;
}

Tensor prune_center_backward(const Tensor& d_pruned, std::size_t full_frames) {
  const std::size_t f = d_pruned.dim(0);
  const std::size_t keep = d_pruned.dim(1);
  const std::size_t first = (full_frames - keep) / 2;
  Tensor d({f, full_frames});
  for (std::size_t i = 0; i < f; ++i) {
    for (std::size_t j = 0; j < keep; ++j) d.at(i, first + j) = d_pruned.at(i, j);
  }
  return d;
}

BatchNormState make_batch_norm(std::size_t channels) {
  BatchNormState s;
  s.running_mean.assign(channels, 0.0);
  s.running_var.assign(channels, 1.0);
  s.gamma.assign(channels, 1.0);
  s.beta.assign(channels, 0.0);
  return s;
}

std::vector<Tensor> batch_norm_forward(const std::vector<const Tensor*>& batch,
                                       const BatchNormState& state,
                                       BatchNormMode mode, BatchNormCache* cache) {
  if (batch.empty()) throw ArgumentError("batch_norm: empty batch");
  if (mode == BatchNormMode::train && batch.size() < 2) {
    throw DegenerateInputError("batch_norm: train mode needs a batch of at least 2");
  }
  const std::size_t channels = state.channels();
  const Tensor& first = *batch.front();
  if (first.dim(0) != channels) {
    throw ContractError("batch_norm: input has " + std::to_string(first.dim(0)) +
                        " channels, state has " + std::to_string(channels));
  }
  for (const Tensor* x : batch) {
    if (!x->same_shape(first)) throw ContractError("batch_norm: ragged batch");
  }
  const std::size_t per = first.size() / channels;
  const std::size_t count = per * batch.size();

  std::vector<double> mean(channels);
  std::vector<double> var(channels);
  if (mode == BatchNormMode::train) {
    for (std::size_t c = 0; c < channels; ++c) {
      double acc = 0.0;
      for (const Tensor* x : batch) {
        const double* r = x->row(c);
        for (std::size_t j = 0; j < per; ++j) acc += r[j];
      }
      mean[c] = acc / static_cast<double>(count);
      double sq = 0.0;
      for (const Tensor* x : batch) {
        const double* r = x->row(c);
        for (std::size_t j = 0; j < per; ++j) sq += (r[j] - mean[c]) * (r[j] - mean[c]);
      }
      var[c] = sq / static_cast<double>(count);
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }
  std::vector<double> inv_std(channels);
  for (std::size_t c = 0; c < channels; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + state.eps);

  std::vector<Tensor> out;
  out.reserve(batch.size());
  std::vector<Tensor> normalized;
  if (cache) normalized.reserve(batch.size());
  for (const Tensor* x : batch) {
    Tensor xhat(x->shape());
    Tensor y(x->shape());
    for (std::size_t c = 0; c < channels; ++c) {
      const double* r = x->row(c);
      double* h = xhat.row(c);
      double* o = y.row(c);
      for (std::size_t j = 0; j < per; ++j) {
        h[j] = (r[j] - mean[c]) * inv_std[c];
        o[j] = state.gamma[c] * h[j] + state.beta[c];
      }
    }
    out.push_back(std::move(y));
    if (cache) normalized.push_back(std::move(xhat));
  }
  if (cache) {
    cache->mode = mode;
    cache->mean = std::move(mean);
    cache->var = std::move(var);
    cache->inv_std = std::move(inv_std);
    cache->normalized = std::move(normalized);
    cache->count_per_channel = count;
  }
  return out;
}

void update_running_stats(BatchNormState& state, const BatchNormCache& cache) {
  if (cache.mode != BatchNormMode::train) return;
  const double m = state.momentum;
  const double n = static_cast<double>(cache.count_per_channel);
  // Running variance tracks the unbiased estimate.
  const double unbias = n > 1 ? n / (n - 1.0) : 1.0;
  for (std::size_t c = 0; c < state.channels(); ++c) {
    state.running_mean[c] = (1.0 - m) * state.running_mean[c] + m * cache.mean[c];
    state.running_var[c] = (1.0 - m) * state.running_var[c] + m * cache.var[c] * unbias;
  }
}

std::vector<Tensor> batch_norm_backward(const BatchNormState& state,
                                        const BatchNormCache& cache,
                                        const std::vector<Tensor>& d_out,
                                        std::vector<double>* d_gamma,
                                        std::vector<double>* d_beta) {
  if (cache.normalized.size() != d_out.size()) {
    throw ContractError("batch_norm_backward: missing or mismatched cache");
  }
  const std::size_t channels = state.channels();
  if (d_gamma && d_gamma->size() != channels) d_gamma->assign(channels, 0.0);
  if (d_beta && d_beta->size() != channels) d_beta->assign(channels, 0.0);
  const std::size_t per = d_out.front().size() / channels;
  const std::size_t batch = d_out.size();
  std::vector<Tensor> d_in;
  d_in.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) d_in.emplace_back(d_out[b].shape());

  for (std::size_t c = 0; c < channels; ++c) {
    double sum_d = 0.0;
    double sum_dx = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* d = d_out[b].row(c);
      const double* h = cache.normalized[b].row(c);
      for (std::size_t j = 0; j < per; ++j) {
        sum_d += d[j];
        sum_dx += d[j] * h[j];
      }
    }
    if (d_gamma) (*d_gamma)[c] += sum_dx;
    if (d_beta) (*d_beta)[c] += sum_d;

    const double g = state.gamma[c];
    const double r = cache.inv_std[c];
    if (cache.mode == BatchNormMode::eval) {
      for (std::size_t b = 0; b < batch; ++b) {
        const double* d = d_out[b].row(c);
        double* o = d_in[b].row(c);
        for (std::size_t j = 0; j < per; ++j) o[j] = d[j] * g * r;
      }
      continue;
    }
    const double n = static_cast<double>(cache.count_per_channel);
    const double mean_d = g * sum_d / n;
    const double mean_dx = g * sum_dx / n;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* d = d_out[b].row(c);
      const double* h = cache.normalized[b].row(c);
      double* o = d_in[b].row(c);
      for (std::size_t j = 0; j < per; ++j) {
        o[j] = r * (g * d[j] - mean_d - h[j] * mean_dx);
      }
    }
  }
  return d_in;
}

std::vector<FeatureMaps> batch_norm(const std::vector<FeatureMaps>& batch,
                                    BatchNormState& state) {
  std::vector<const Tensor*> inputs;
  inputs.reserve(batch.size());
  for (const auto& m : batch) inputs.push_back(&m.maps);
  BatchNormCache cache;
  std::vector<Tensor> out = batch_norm_forward(inputs, state, state.mode, &cache);
  update_running_stats(state, cache);
  std::vector<FeatureMaps> maps;
  maps.reserve(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    maps.push_back(FeatureMaps{std::move(out[i]), batch[i].stage});
  }
  return maps;
}

}  // namespace relward
