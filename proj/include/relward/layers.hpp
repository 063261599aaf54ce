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

// Shared dense building blocks: fully connected layers, multi-channel 2-D
// correlation and windowed max-pooling, each with an explicit backward.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "relward/rng.hpp"
#include "relward/tensor.hpp"

namespace relward {

struct Dense {
  Tensor weight;  // out x in
  Tensor bias;    // out

  std::size_t in_dim() const { return weight.dim(1); }
  std::size_t out_dim() const { return weight.dim(0); }
};

/// Uniform in +/- sqrt(6 / (fan_in + fan_out)), zero bias.
Dense make_dense(std::size_t in, std::size_t out, Rng& rng);
Dense make_zero_dense(std::size_t in, std::size_t out);

std::vector<double> dense_forward(const Dense& layer, std::span<const double> in);

/// Accumulates parameter gradients into `grad` (sized to zeros on first use)
/// and returns d input.
std::vector<double> dense_backward(const Dense& layer, std::span<const double> in,
                                   std::span<const double> d_out, Dense* grad);

void relu_inplace(std::span<double> v);
/// Zeroes d wherever the pre-activation was not positive.
void relu_backward_inplace(std::span<const double> pre, std::span<double> d);

void xavier_fill(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// out[o][i][j] = bias[o] + sum_{c,a,b} w[o][c][a][b] * in[c][i+a-pad_f][j+b-pad_t]
/// with zero padding. in: C x H x W, w: O x C x kh x kw.
Tensor conv2d_forward(const Tensor& in, const Tensor& weight, const Tensor& bias,
                      std::size_t pad_f, std::size_t pad_t);

void conv2d_backward(const Tensor& in, const Tensor& weight, const Tensor& d_out,
                     std::size_t pad_f, std::size_t pad_t, Tensor* d_in,
                     Tensor* d_weight, Tensor* d_bias);

struct PoolResult {
  Tensor out;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

/// Non-overlapping max-pool over the last two axes of a C x H x W tensor
/// with window (win_f, win_t) and equal stride; trailing remainders drop.
/// Ties go to the first maximal element in scan order.
PoolResult max_pool2d(const Tensor& in, std::size_t win_f, std::size_t win_t);

/// Routes d_out to the recorded argmax positions of an input of `in_shape`.
Tensor max_pool2d_backward(const std::vector<std::size_t>& in_shape,
                           const std::vector<std::size_t>& argmax,
                           const Tensor& d_out);

}  // namespace relward
