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

#include "relward/relevance.hpp"

#include <algorithm>
#include <cmath>

#include "relward/errors.hpp"

namespace relward {

RelevanceNet make_relevance_net(std::size_t features, std::size_t hidden,
                                RelevancePooling pooling, Rng& rng,
                                bool zero_output) {
  if (features == 0 || hidden == 0) {
    throw ArgumentError("relevance net: feature and hidden sizes must be positive");
  }
  RelevanceNet net;
  net.hidden = make_dense(features, hidden, rng);
  net.output = zero_output ? make_zero_dense(hidden, features)
                           : make_dense(hidden, features, rng);
  net.pooling = pooling;
  return net;
}

std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw ArgumentError("softmax: empty input");
  const double top = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - top);
    total += out[i];
  }
  for (double& o : out) o /= total;
  return out;
}

std::vector<double> softmax_backward(std::span<const double> w,
                                     std::span<const double> d_w) {
  double dot = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) dot += w[i] * d_w[i];
  std::vector<double> d(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) d[i] = w[i] * (d_w[i] - dot);
  return d;
}

RelevanceWeights relevance_forward(const RelevanceNet& net,
                                   std::span<const double> pooled,
                                   RelevanceCache* cache) {
  if (pooled.size() != net.input_dim()) {
    throw ArgumentError("relevance: net expects " + std::to_string(net.input_dim()) +
                        " features, got " + std::to_string(pooled.size()));
  }
  std::vector<double> pre = dense_forward(net.hidden, pooled);
  std::vector<double> act = pre;
  relu_inplace(act);
  std::vector<double> logits = dense_forward(net.output, act);
  RelevanceWeights w{softmax(logits)};
  if (cache) {
    cache->pooled.assign(pooled.begin(), pooled.end());
    cache->hidden_pre = std::move(pre);
    cache->hidden = std::move(act);
    cache->logits = std::move(logits);
    cache->weights = w.w;
  }
  return w;
}

std::vector<double> relevance_backward(const RelevanceNet& net,
                                       const RelevanceCache& cache,
                                       std::span<const double> d_weights,
                                       RelevanceNet* grad) {
  if (cache.weights.size() != d_weights.size()) {
    throw ContractError("relevance_backward: missing or mismatched cache");
  }
  const std::vector<double> d_logits = softmax_backward(cache.weights, d_weights);
  std::vector<double> d_hidden = dense_backward(
      net.output, cache.hidden, d_logits, grad ? &grad->output : nullptr);
  relu_backward_inplace(cache.hidden_pre, d_hidden);
  return dense_backward(net.hidden, cache.pooled, d_hidden,
                        grad ? &grad->hidden : nullptr);
}

namespace {

// Mean over everything after the leading axis.
std::vector<double> leading_axis_means(const Tensor& t) {
  const std::size_t n = t.dim(0);
  const std::size_t per = t.size() / n;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* r = t.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < per; ++j) acc += r[j];
    out[i] = acc / static_cast<double>(per);
  }
  return out;
}

}  // namespace

RelevanceWeights acoustic_relevance(const Spectrogram& x, const RelevanceNet& net,
                                    RelevanceCache* cache) {
  if (net.pooling != RelevancePooling::time_average) {
    throw ArgumentError("acoustic_relevance: net must use time-average pooling");
  }
  if (net.output_dim() != x.filter_count() || net.input_dim() != x.filter_count()) {
    throw ArgumentError("acoustic_relevance: net dimension " +
                        std::to_string(net.output_dim()) + " != filter count " +
                        std::to_string(x.filter_count()));
  }
  return relevance_forward(net, leading_axis_means(x.values), cache);
}

RelevanceWeights modulation_relevance(const FeatureMaps& p, const RelevanceNet& net,
                                      RelevanceCache* cache) {
  if (net.pooling != RelevancePooling::global_average) {
    throw ArgumentError("modulation_relevance: net must use global-average pooling");
  }
  if (net.output_dim() != p.map_count() || net.input_dim() != p.map_count()) {
    throw ArgumentError("modulation_relevance: net dimension " +
                        std::to_string(net.output_dim()) + " != map count " +
                        std::to_string(p.map_count()));
  }
  return relevance_forward(net, leading_axis_means(p.maps), cache);
}

Spectrogram apply_acoustic_weights(const Spectrogram& x, const RelevanceWeights& w_a) {
  if (w_a.w.size() != x.filter_count()) {
    throw ArgumentError("apply_acoustic_weights: weight length mismatch");
  }
  Spectrogram y{x.values, SpectrogramStage::y_weighted};
  const std::size_t t = x.frame_count();
  for (std::size_t i = 0; i < x.filter_count(); ++i) {
    double* r = y.values.row(i);
    for (std::size_t j = 0; j < t; ++j) r[j] *= w_a.w[i];
  }
  return y;
}

FeatureMaps apply_modulation_weights(const FeatureMaps& p, const RelevanceWeights& w_m) {
  if (w_m.w.size() != p.map_count()) {
    throw ArgumentError("apply_modulation_weights: weight length mismatch");
  }
  FeatureMaps q{p.maps, FeatureStage::q_weighted};
  const std::size_t per = p.maps.size() / p.map_count();
  for (std::size_t c = 0; c < p.map_count(); ++c) {
    double* r = q.maps.row(c);
    for (std::size_t j = 0; j < per; ++j) r[j] *= w_m.w[c];
  }
  return q;
}

void add_pooling_backward(std::span<const double> d_pooled, Tensor& d_rep) {
  const std::size_t n = d_rep.dim(0);
  const std::size_t per = d_rep.size() / n;
  const double inv = 1.0 / static_cast<double>(per);
  for (std::size_t i = 0; i < n; ++i) {
    double* r = d_rep.row(i);
    const double d = d_pooled[i] * inv;
    for (std::size_t j = 0; j < per; ++j) r[j] += d;
  }
}

}  // namespace relward
