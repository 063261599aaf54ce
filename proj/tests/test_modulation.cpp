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

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "relward/acoustic_filterbank.hpp"
#include "relward/errors.hpp"
#include "relward/modulation_layer.hpp"
#include "relward/rng.hpp"

using namespace relward;

namespace {

Spectrogram random_z(std::size_t f, std::size_t t, std::uint64_t seed) {
  Spectrogram z{Tensor({f, t}), SpectrogramStage::z_normalized};
  Rng r = make_rng(seed, "z");
  for (double& v : z.values.values()) v = uniform(r, -1.5, 1.5);
  return z;
}

oracle::Mat to_mat(const Tensor& t, std::size_t offset, std::size_t rows, std::size_t cols) {
  oracle::Mat m(rows, std::vector<double>(cols));
  for (std::size_t a = 0; a < rows; ++a)
    for (std::size_t b = 0; b < cols; ++b) m[a][b] = t[offset + a * cols + b];
  return m;
}

}  // namespace

TEST(Modulation, ZeroInputGivesRectifiedBias) {
  Rng r = make_rng(1, "k");
  ModulationKernels k = make_modulation_kernels(3, 3, 3, r);
  k.bias[0] = 0.4;
  k.bias[1] = -0.2;
  k.bias[2] = 0.0;
  const FeatureMaps p = modulation_forward(Spectrogram{Tensor({7, 9})}, k);
  ASSERT_EQ(p.maps.shape(), (std::vector<std::size_t>{3, 5, 7}));
  for (std::size_t i = 0; i < 35; ++i) {
    EXPECT_EQ(p.maps[i], 0.4);
    EXPECT_EQ(p.maps[35 + i], 0.0);
    EXPECT_EQ(p.maps[70 + i], 0.0);
  }
}

TEST(Modulation, CentredImpulseCropsInput) {
  ModulationKernels k{Tensor({1, 3, 5}), Tensor({1})};
  k.kernels.at(0, 1, 2) = 1.0;
  Spectrogram z{Tensor({6, 8})};
  Rng r = make_rng(2, "z");
  for (double& v : z.values.values()) v = uniform(r, 0.0, 1.0);
  const FeatureMaps p = modulation_forward(z, k);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) EXPECT_EQ(p.maps.at(0, a, b), z.values.at(a + 1, b + 2));
}

TEST(Modulation, MatchesBruteForceOracle) {
  Rng r = make_rng(3, "k");
  ModulationKernels k = make_modulation_kernels(2, 3, 3, r);
  k.bias[0] = 0.05;
  k.bias[1] = -0.1;
  const Spectrogram z = random_z(6, 8, 4);
  const FeatureMaps p = modulation_forward(z, k);
  EXPECT_EQ(p.stage, FeatureStage::p_conv);
  const oracle::Mat in = to_mat(z.values, 0, 6, 8);
  for (std::size_t c = 0; c < 2; ++c) {
    const oracle::Mat out = oracle::correlate2d(in, to_mat(k.kernels, c * 9, 3, 3));
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = 0; b < 6; ++b)
        EXPECT_NEAR(p.maps.at(c, a, b), std::max(0.0, out[a][b] + k.bias[c]), 1e-12);
  }
}

TEST(Modulation, PreActivationIsLinearInInput) {
  Rng r = make_rng(5, "k");
  const ModulationKernels k = make_modulation_kernels(3, 5, 5, r);
  const Spectrogram z = random_z(10, 12, 6);
  Spectrogram z2 = z;
  for (double& v : z2.values.values()) v *= 2.0;
  ModulationCache a, b;
  modulation_forward(z, k, &a);
  modulation_forward(z2, k, &b);
  for (std::size_t i = 0; i < a.pre_activation.size(); ++i)
    EXPECT_EQ(b.pre_activation[i], 2.0 * a.pre_activation[i]);
}

TEST(Modulation, KernelLargerThanInputIsArgumentError) {
  Rng r = make_rng(5, "k");
  const ModulationKernels k = make_modulation_kernels(2, 5, 5, r);
  EXPECT_THROW(modulation_forward(random_z(4, 9, 1), k), ArgumentError);
  EXPECT_THROW(modulation_forward(random_z(9, 4, 1), k), ArgumentError);
  EXPECT_THROW(make_modulation_kernels(2, 4, 5, r), ArgumentError);
}

TEST(MaxPool3x1, FrequencyColumnHandCase) {
  FeatureMaps p{Tensor({1, 6, 1})};
  const double col[6] = {1, 5, 3, 2, 2, 2};
  for (std::size_t i = 0; i < 6; ++i) p.maps[i] = col[i];
  const PooledMaps out = max_pool_3x1(p);
  ASSERT_EQ(out.maps.rows(), 2u);
  EXPECT_EQ(out.maps.maps[0], 5.0);
  EXPECT_EQ(out.maps.maps[1], 2.0);
  EXPECT_EQ(out.maps.stage, FeatureStage::p_pooled);
}

TEST(MaxPool3x1, RemainderRowsDropAndConstantMapsStayConstant) {
  FeatureMaps p{Tensor({2, 8, 3}, 0.75)};
  const PooledMaps out = max_pool_3x1(p);
  ASSERT_EQ(out.maps.maps.shape(), (std::vector<std::size_t>{2, 2, 3}));
  for (double v : out.maps.maps.values()) EXPECT_EQ(v, 0.75);
  FeatureMaps again{out.maps.maps};
  again.maps = Tensor({2, 3, 3}, 0.75);
  EXPECT_EQ(max_pool_3x1(again).maps.maps.values(), std::vector<double>(6, 0.75));
  EXPECT_THROW(max_pool_3x1(FeatureMaps{Tensor({1, 2, 4})}), ArgumentError);
}

TEST(MaxPool3x1, MatchesWindowedMaxOracle) {
  FeatureMaps p{Tensor({3, 10, 4})};
  Rng r = make_rng(7, "p");
  for (double& v : p.maps.values()) v = uniform(r, -1.0, 1.0);
  const PooledMaps out = max_pool_3x1(p);
  double in_max = -1e9, out_max = -1e9;
  for (double v : p.maps.values()) in_max = std::max(in_max, v);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 4; ++b) {
        const double m = std::max({p.maps.at(c, 3 * a, b), p.maps.at(c, 3 * a + 1, b), p.maps.at(c, 3 * a + 2, b)});
        EXPECT_EQ(out.maps.maps.at(c, a, b), m);
        out_max = std::max(out_max, m);
      }
  EXPECT_LE(out_max, in_max);
}

TEST(MaxPool3x1, GradientRoutesToArgmaxOnly) {
  FeatureMaps p{Tensor({1, 6, 2})};
  Rng r = make_rng(8, "p");
  for (double& v : p.maps.values()) v = uniform(r, -1.0, 1.0);
  const PooledMaps out = max_pool_3x1(p);
  const Tensor d = max_pool_3x1_backward(out, Tensor({1, 2, 2}, 1.0));
  for (std::size_t i = 0; i < 12; ++i) {
    FeatureMaps up = p;
    up.maps[i] += 1e-6;
    const PooledMaps o2 = max_pool_3x1(up);
    double diff = 0.0;
    for (std::size_t j = 0; j < 4; ++j) diff += (o2.maps.maps[j] - out.maps.maps[j]) / 1e-6;
    EXPECT_NEAR(d[i], diff, 1e-6) << i;
  }
}

TEST(Modulation, ChainGradientMatchesFiniteDifferences) {
  Rng r = make_rng(9, "k");
  ModulationKernels k = make_modulation_kernels(2, 3, 3, r);
  k.bias[0] = 0.1;
  k.bias[1] = 0.2;
  const Spectrogram z = random_z(8, 7, 10);
  Tensor weights({2, 2, 5});
  Rng rw = make_rng(11, "w");
  for (double& v : weights.values()) v = uniform(rw, -1.0, 1.0);
  auto loss = [&](const Spectrogram& in, const ModulationKernels& kk) {
    const PooledMaps pm = max_pool_3x1(modulation_forward(in, kk));
    double l = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) l += weights[i] * pm.maps.maps[i];
    return l;
  };
  ModulationCache cache;
  const FeatureMaps p = modulation_forward(z, k, &cache);
  const PooledMaps pm = max_pool_3x1(p);
  const Tensor d_p = max_pool_3x1_backward(pm, weights);
  ModulationKernels grad;
  Tensor d_z;
  modulation_backward(z, k, cache, d_p, &grad, &d_z);
  const double h = 1e-6;
  for (std::size_t i = 0; i < z.values.size(); ++i) {
    Spectrogram up = z, dn = z;
    up.values[i] += h;
    dn.values[i] -= h;
    const double fd = (loss(up, k) - loss(dn, k)) / (2 * h);
    EXPECT_LE(std::abs(d_z[i] - fd) / std::max(1.0, std::abs(fd)), 1e-4) << "z " << i;
  }
  for (std::size_t i = 0; i < k.kernels.size(); ++i) {
    ModulationKernels up = k, dn = k;
    up.kernels[i] += h;
    dn.kernels[i] -= h;
    const double fd = (loss(z, up) - loss(z, dn)) / (2 * h);
    EXPECT_LE(std::abs(grad.kernels[i] - fd) / std::max(1.0, std::abs(fd)), 1e-4) << "w " << i;
  }
  for (std::size_t c = 0; c < 2; ++c) {
    ModulationKernels up = k, dn = k;
    up.bias[c] += h;
    dn.bias[c] -= h;
    const double fd = (loss(z, up) - loss(z, dn)) / (2 * h);
    EXPECT_LE(std::abs(grad.bias[c] - fd) / std::max(1.0, std::abs(fd)), 1e-4) << "b " << c;
  }
  EXPECT_THROW(modulation_backward(z, k, cache, Tensor({2, 1, 1}), &grad, &d_z), ContractError);
}
