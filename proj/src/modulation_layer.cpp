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

#include "relward/modulation_layer.hpp"

#include "relward/acoustic_filterbank.hpp"
#include "relward/errors.hpp"
#include "relward/layers.hpp"

namespace relward {

ModulationKernels make_modulation_kernels(std::size_t count, std::size_t kf,
                                          std::size_t kt, Rng& rng) {
  if (count == 0 || kf % 2 == 0 || kt % 2 == 0) {
    throw ArgumentError("modulation kernels: need K > 0 and odd kf, kt");
  }
  ModulationKernels m{Tensor({count, kf, kt}), Tensor({count})};
  xavier_fill(m.kernels, kf * kt, count * kf * kt, rng);
  return m;
}

namespace {

Tensor as_conv_weight(const ModulationKernels& k) {
  Tensor w({k.count(), 1, k.span_f(), k.span_t()});
  w.values() = k.kernels.values();
  return w;
}

}  // namespace

FeatureMaps modulation_forward(const Spectrogram& z, const ModulationKernels& kernels,
                               ModulationCache* cache) {
  const std::size_t f = z.filter_count();
  const std::size_t t = z.frame_count();
  if (f < kernels.span_f() || t < kernels.span_t()) {
    throw ArgumentError("modulation_forward: kernel " +
                        std::to_string(kernels.span_f()) + "x" +
                        std::to_string(kernels.span_t()) + " larger than input " +
                        std::to_string(f) + "x" + std::to_string(t));
  }
  Tensor in({1, f, t});
  in.values() = z.values.values();
  Tensor pre = conv2d_forward(in, as_conv_weight(kernels), kernels.bias, 0, 0);
  FeatureMaps p{pre, FeatureStage::p_conv};
  relu_inplace(p.maps.flat());
  if (cache) cache->pre_activation = std::move(pre);
  return p;
}

void modulation_backward(const Spectrogram& z, const ModulationKernels& kernels,
                         const ModulationCache& cache, const Tensor& d_p,
                         ModulationKernels* grad, Tensor* d_z) {
  if (!cache.pre_activation.same_shape(d_p)) {
    throw ContractError("modulation_backward: gradient shape " + d_p.shape_string() +
                        " does not match cached " + cache.pre_activation.shape_string());
  }
  Tensor d_pre = d_p;
  relu_backward_inplace(cache.pre_activation.flat(), d_pre.flat());
  Tensor in({1, z.filter_count(), z.frame_count()});
  in.values() = z.values.values();
  Tensor d_w;
  Tensor d_in;
  if (grad) d_w = Tensor({kernels.count(), 1, kernels.span_f(), kernels.span_t()});
  conv2d_backward(in, as_conv_weight(kernels), d_pre, 0, 0, d_z ? &d_in : nullptr,
                  grad ? &d_w : nullptr, grad ? &grad->bias : nullptr);
  if (grad) {
    if (!grad->kernels.same_shape(kernels.kernels)) grad->kernels = Tensor(kernels.kernels.shape());
    for (std::size_t i = 0; i < d_w.size(); ++i) grad->kernels[i] += d_w[i];
  }
  if (d_z) {
    *d_z = Tensor({z.filter_count(), z.frame_count()});
    d_z->values() = d_in.values();
  }
}

PooledMaps max_pool_3x1(const FeatureMaps& p) {
  if (p.rows() < kPoolWindowFrequency) {
    throw ArgumentError("max_pool_3x1: frequency extent " + std::to_string(p.rows()) +
                        " < 3");
  }
  PoolResult r = max_pool2d(p.maps, kPoolWindowFrequency, 1);
  return PooledMaps{FeatureMaps{std::move(r.out), FeatureStage::p_pooled},
                    std::move(r.argmax), p.maps.shape()};
}

Tensor max_pool_3x1_backward(const PooledMaps& pooled, const Tensor& d_out) {
  if (d_out.size() != pooled.argmax.size()) {
    throw ContractError("max_pool_3x1_backward: gradient does not match pooled maps");
  }
  return max_pool2d_backward(pooled.input_shape, pooled.argmax, d_out);
}

}  // namespace relward
