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

#include "relward/layers.hpp"

#include <cmath>

#include "relward/errors.hpp"

namespace relward {

void xavier_fill(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : t.values()) v = uniform(rng, -limit, limit);
}

Dense make_dense(std::size_t in, std::size_t out, Rng& rng) {
  Dense d{Tensor({out, in}), Tensor({out})};
  xavier_fill(d.weight, in, out, rng);
  return d;
}

Dense make_zero_dense(std::size_t in, std::size_t out) {
  return Dense{Tensor({out, in}), Tensor({out})};
}

std::vector<double> dense_forward(const Dense& layer, std::span<const double> in) {
  const std::size_t n_in = layer.in_dim();
  const std::size_t n_out = layer.out_dim();
  if (in.size() != n_in) {
    throw ContractError("dense: input length " + std::to_string(in.size()) +
                        " != " + std::to_string(n_in));
  }
  std::vector<double> out(n_out);
  for (std::size_t o = 0; o < n_out; ++o) {
    const double* w = layer.weight.row(o);
    double acc = layer.bias[o];
    for (std::size_t i = 0; i < n_in; ++i) acc += w[i] * in[i];
    out[o] = acc;
  }
  return out;
}

std::vector<double> dense_backward(const Dense& layer, std::span<const double> in,
                                   std::span<const double> d_out, Dense* grad) {
  const std::size_t n_in = layer.in_dim();
  const std::size_t n_out = layer.out_dim();
  std::vector<double> d_in(n_in, 0.0);
  if (grad && !grad->weight.same_shape(layer.weight)) {
    grad->weight = Tensor(layer.weight.shape());
    grad->bias = Tensor(layer.bias.shape());
  }
  for (std::size_t o = 0; o < n_out; ++o) {
    const double d = d_out[o];
    if (d == 0.0) continue;
    const double* w = layer.weight.row(o);
    for (std::size_t i = 0; i < n_in; ++i) d_in[i] += d * w[i];
    if (grad) {
      double* gw = grad->weight.row(o);
      for (std::size_t i = 0; i < n_in; ++i) gw[i] += d * in[i];
      grad->bias[o] += d;
    }
  }
  return d_in;
}

void relu_inplace(std::span<double> v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
}

void relu_backward_inplace(std::span<const double> pre, std::span<double> d) {
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(pre[i] > 0.0)) d[i] = 0.0;
  }
}

Tensor conv2d_forward(const Tensor& in, const Tensor& weight, const Tensor& bias,
                      std::size_t pad_f, std::size_t pad_t) {
  const std::size_t channels = in.dim(0);
  const std::size_t h = in.dim(1);
  const std::size_t w = in.dim(2);
  const std::size_t maps = weight.dim(0);
  const std::size_t kh = weight.dim(2);
  const std::size_t kw = weight.dim(3);
  if (weight.dim(1) != channels) {
    throw ContractError("conv2d: kernel expects " + std::to_string(weight.dim(1)) +
                        " channels, input has " + std::to_string(channels));
  }
  if (h + 2 * pad_f < kh || w + 2 * pad_t < kw) {
    throw ArgumentError("conv2d: kernel " + std::to_string(kh) + "x" +
                        std::to_string(kw) + " larger than input " +
                        std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t oh = h + 2 * pad_f - kh + 1;
  const std::size_t ow = w + 2 * pad_t - kw + 1;
  Tensor out({maps, oh, ow});
  for (std::size_t o = 0; o < maps; ++o) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        double acc = bias[o];
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t a = 0; a < kh; ++a) {
            const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(i + a) -
                                     static_cast<std::ptrdiff_t>(pad_f);
            if (r < 0 || r >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t b = 0; b < kw; ++b) {
              const std::ptrdiff_t col = static_cast<std::ptrdiff_t>(j + b) -
                                         static_cast<std::ptrdiff_t>(pad_t);
              if (col < 0 || col >= static_cast<std::ptrdiff_t>(w)) continue;
              acc += weight.at(o, c, a, b) *
                     in.at(c, static_cast<std::size_t>(r), static_cast<std::size_t>(col));
            }
          }
        }
        out.at(o, i, j) = acc;
      }
    }
  }
  return out;
}

void conv2d_backward(const Tensor& in, const Tensor& weight, const Tensor& d_out,
                     std::size_t pad_f, std::size_t pad_t, Tensor* d_in,
                     Tensor* d_weight, Tensor* d_bias) {
  const std::size_t channels = in.dim(0);
  const std::size_t h = in.dim(1);
  const std::size_t w = in.dim(2);
  const std::size_t maps = weight.dim(0);
  const std::size_t kh = weight.dim(2);
  const std::size_t kw = weight.dim(3);
  const std::size_t oh = d_out.dim(1);
  const std::size_t ow = d_out.dim(2);
  if (d_in) *d_in = Tensor(in.shape());
  if (d_weight && !d_weight->same_shape(weight)) *d_weight = Tensor(weight.shape());
  if (d_bias && d_bias->size() != maps) *d_bias = Tensor({maps});
  for (std::size_t o = 0; o < maps; ++o) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        const double d = d_out.at(o, i, j);
        if (d == 0.0) continue;
        if (d_bias) (*d_bias)[o] += d;
        for (std::size_t c = 0; c < channels; ++c) {
          for (std::size_t a = 0; a < kh; ++a) {
            const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(i + a) -
                                     static_cast<std::ptrdiff_t>(pad_f);
            if (r < 0 || r >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t b = 0; b < kw; ++b) {
              const std::ptrdiff_t col = static_cast<std::ptrdiff_t>(j + b) -
                                         static_cast<std::ptrdiff_t>(pad_t);
              if (col < 0 || col >= static_cast<std::ptrdiff_t>(w)) continue;
              const auto ru = static_cast<std::size_t>(r);
              const auto cu = static_cast<std::size_t>(col);
              if (d_weight) d_weight->at(o, c, a, b) += d * in.at(c, ru, cu);
              if (d_in) d_in->at(c, ru, cu) += d * weight.at(o, c, a, b);
            }
          }
        }
      }
    }
  }
}

PoolResult max_pool2d(const Tensor& in, std::size_t win_f, std::size_t win_t) {
  const std::size_t channels = in.dim(0);
  const std::size_t h = in.dim(1);
  const std::size_t w = in.dim(2);
  if (win_f == 0 || win_t == 0 || h < win_f || w < win_t) {
    throw ArgumentError("max_pool: window " + std::to_string(win_f) + "x" +
                        std::to_string(win_t) + " does not fit input " +
                        std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t oh = h / win_f;
  const std::size_t ow = w / win_t;
  PoolResult r{Tensor({channels, oh, ow}), {}};
  r.argmax.resize(r.out.size());
  std::size_t flat = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j, ++flat) {
        std::size_t best = (c * h + i * win_f) * w + j * win_t;
        double best_v = in[best];
        for (std::size_t a = 0; a < win_f; ++a) {
          for (std::size_t b = 0; b < win_t; ++b) {
            const std::size_t idx = (c * h + i * win_f + a) * w + j * win_t + b;
            if (in[idx] > best_v) {
              best_v = in[idx];
              best = idx;
            }
          }
        }
        r.out[flat] = best_v;
        r.argmax[flat] = best;
      }
    }
  }
  return r;
}

Tensor max_pool2d_backward(const std::vector<std::size_t>& in_shape,
                           const std::vector<std::size_t>& argmax,
                           const Tensor& d_out) {
  Tensor d_in(in_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) d_in[argmax[o]] += d_out[o];
  return d_in;
}

}  // namespace relward
