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
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "relward/errors.hpp"
#include "relward/relevance.hpp"
#include "relward/rng.hpp"

using namespace relward;

namespace {

void randomize(Tensor& t, Rng& r, double scale = 1.0) {
  for (double& v : t.values()) v = uniform(r, -scale, scale);
}

RelevanceNet random_net(std::size_t d, std::size_t h, RelevancePooling pool, std::uint64_t seed) {
  Rng r = make_rng(seed, "net");
  RelevanceNet net = make_relevance_net(d, h, pool, r, false);
  randomize(net.output.weight, r);
  randomize(net.hidden.bias, r, 0.3);
  randomize(net.output.bias, r, 0.3);
  return net;
}

Spectrogram random_spec(std::size_t f, std::size_t t, std::uint64_t seed) {
  Spectrogram x{Tensor({f, t})};
  Rng r = make_rng(seed, "spec");
  randomize(x.values, r, 2.0);
  return x;
}

FeatureMaps random_maps(std::size_t k, std::size_t rows, std::size_t cols, std::uint64_t seed) {
  FeatureMaps p{Tensor({k, rows, cols}), FeatureStage::p_pooled};
  Rng r = make_rng(seed, "maps");
  for (double& v : p.maps.values()) v = uniform(r, 0.0, 2.0);
  return p;
}

}  // namespace

TEST(Softmax, UniformOnZeros) {
  const std::vector<double> w = softmax(std::vector<double>(80, 0.0));
  for (double v : w) EXPECT_DOUBLE_EQ(v, 0.0125);
}

TEST(Softmax, HandCase) {
  const std::vector<double> w = softmax(std::vector<double>{std::log(2.0), 0.0});
  EXPECT_NEAR(w[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(w[1], 1.0 / 3.0, 1e-15);
}

TEST(Softmax, ShiftInvariantAndOrderPreserving) {
  Rng r = make_rng(3, "sm");
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(9), shifted(9);
    for (double& x : v) x = uniform(r, -5.0, 5.0);
    const double c = uniform(r, -100.0, 100.0);
    for (std::size_t i = 0; i < 9; ++i) shifted[i] = v[i] + c;
    const auto a = softmax(v), b = softmax(shifted);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_NEAR(a[i], b[i], 1e-14);
    EXPECT_EQ(std::max_element(a.begin(), a.end()) - a.begin(),
              std::max_element(v.begin(), v.end()) - v.begin());
    EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(Softmax, EmptyIsArgumentError) {
  EXPECT_THROW(softmax(std::vector<double>{}), ArgumentError);
}

TEST(AcousticRelevance, ZeroOutputLayerGivesUniformWeights) {
  Rng r = make_rng(1, "init");
  const RelevanceNet net = make_relevance_net(80, 128, RelevancePooling::time_average, r);
  const RelevanceWeights w = acoustic_relevance(random_spec(80, 101, 2), net);
  for (double v : w.w) EXPECT_DOUBLE_EQ(v, 1.0 / 80.0);
}

TEST(AcousticRelevance, MatchesDenseOracle) {
  const RelevanceNet net = random_net(3, 2, RelevancePooling::time_average, 11);
  const Spectrogram x = random_spec(3, 7, 12);
  std::vector<double> mean(3, 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 7; ++j) mean[i] += x.values.at(i, j);
    mean[i] /= 7.0;
  }
  const auto expect = oracle::relevance(net, mean);
  const RelevanceWeights w = acoustic_relevance(x, net);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(w.w[i], expect[i], 1e-12);
  EXPECT_NEAR(w.w[0] + w.w[1] + w.w[2], 1.0, 1e-12);
}

TEST(AcousticRelevance, ShapeAndPoolingAreChecked) {
  const RelevanceNet net = random_net(3, 2, RelevancePooling::time_average, 11);
  EXPECT_THROW(acoustic_relevance(random_spec(4, 7, 1), net), ArgumentError);
  const RelevanceNet global = random_net(3, 2, RelevancePooling::global_average, 11);
  EXPECT_THROW(acoustic_relevance(random_spec(3, 7, 1), global), ArgumentError);
}

TEST(ModulationRelevance, ZeroOutputLayerGivesUniformWeights) {
  Rng r = make_rng(1, "init");
  const RelevanceNet net = make_relevance_net(40, 32, RelevancePooling::global_average, r);
  const RelevanceWeights w = modulation_relevance(random_maps(40, 5, 17, 2), net);
  for (double v : w.w) EXPECT_DOUBLE_EQ(v, 0.025);
}

TEST(ModulationRelevance, MatchesDenseOracle) {
  const RelevanceNet net = random_net(2, 3, RelevancePooling::global_average, 21);
  const FeatureMaps p = random_maps(2, 4, 5, 22);
  std::vector<double> mean(2, 0.0);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = 0; b < 5; ++b) mean[c] += p.maps.at(c, a, b);
    mean[c] /= 20.0;
  }
  const auto expect = oracle::relevance(net, mean);
  const RelevanceWeights w = modulation_relevance(p, net);
  EXPECT_NEAR(w.w[0], expect[0], 1e-12);
  EXPECT_NEAR(w.w[1], expect[1], 1e-12);
  EXPECT_THROW(modulation_relevance(random_maps(3, 4, 5, 1), net), ArgumentError);
}

TEST(ApplyWeights, ElementwiseRowScaling) {
  const Spectrogram x = random_spec(5, 6, 4);
  const RelevanceWeights w{{0.1, 0.2, 0.3, 0.25, 0.15}};
  const Spectrogram y = apply_acoustic_weights(x, w);
  EXPECT_EQ(y.stage, SpectrogramStage::y_weighted);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(y.values.at(i, j), w.w[i] * x.values.at(i, j));
  const Spectrogram u = apply_acoustic_weights(x, RelevanceWeights{std::vector<double>(5, 0.2)});
  for (std::size_t i = 0; i < x.values.size(); ++i) EXPECT_EQ(u.values[i], x.values[i] * 0.2);
  EXPECT_THROW(apply_acoustic_weights(x, RelevanceWeights{{0.5, 0.5}}), ArgumentError);
}

TEST(ApplyWeights, ConcentratedWeightSuppressesOtherRows) {
  const Spectrogram x = random_spec(4, 3, 5);
  const Spectrogram y = apply_acoustic_weights(x, RelevanceWeights{softmax(std::vector<double>{0, 40, 0, 0})});
  for (std::size_t i : {0u, 2u, 3u})
    for (std::size_t j = 0; j < 3; ++j) EXPECT_LT(std::abs(y.values.at(i, j)), 1e-15);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(y.values.at(1, j), x.values.at(1, j), 1e-15);
}

TEST(ApplyWeights, PerMapScalingAndZeroMaps) {
  const FeatureMaps p = random_maps(3, 2, 4, 6);
  const RelevanceWeights w{{0.5, 0.3, 0.2}};
  const FeatureMaps q = apply_modulation_weights(p, w);
  EXPECT_EQ(q.stage, FeatureStage::q_weighted);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t b = 0; b < 4; ++b) EXPECT_EQ(q.maps.at(c, a, b), w.w[c] * p.maps.at(c, a, b));
  FeatureMaps zero = p;
  zero.maps.fill(0.0);
  const FeatureMaps qz = apply_modulation_weights(zero, w);
  for (double v : qz.maps.values()) EXPECT_EQ(v, 0.0);
}

TEST(ApplyWeights, LinearInRepresentation) {
  const Spectrogram a = random_spec(4, 5, 7), b = random_spec(4, 5, 8);
  const RelevanceWeights w{{0.4, 0.1, 0.3, 0.2}};
  Spectrogram sum{a.values};
  for (std::size_t i = 0; i < sum.values.size(); ++i) sum.values[i] = 2.0 * a.values[i] - 3.0 * b.values[i];
  const Spectrogram ya = apply_acoustic_weights(a, w), yb = apply_acoustic_weights(b, w);
  const Spectrogram ys = apply_acoustic_weights(sum, w);
  for (std::size_t i = 0; i < sum.values.size(); ++i)
    EXPECT_NEAR(ys.values[i], 2.0 * ya.values[i] - 3.0 * yb.values[i], 1e-14);
}

namespace {

// L = sum r .* (w_i * x_i), with w computed from x itself, so the check
// covers both the gating product and the relevance path.
double gated_loss(const Spectrogram& x, const RelevanceNet& net, const Tensor& r) {
  const Spectrogram y = apply_acoustic_weights(x, acoustic_relevance(x, net));
  double l = 0.0;
  for (std::size_t i = 0; i < y.values.size(); ++i) l += r[i] * y.values[i];
  return l;
}

}  // namespace

TEST(RelevanceBackward, AcousticPathMatchesFiniteDifferences) {
  const std::size_t f = 5, t = 6;
  RelevanceNet net = random_net(f, 4, RelevancePooling::time_average, 31);
  const Spectrogram x = random_spec(f, t, 32);
  Tensor r({f, t});
  Rng rr = make_rng(33, "r");
  randomize(r, rr);

  RelevanceCache cache;
  const RelevanceWeights w = acoustic_relevance(x, net, &cache);
  // Product rule: dL/dx = w_i r_ij (direct) + pooling backward of dL/dpooled.
  std::vector<double> d_w(f, 0.0);
  for (std::size_t i = 0; i < f; ++i)
    for (std::size_t j = 0; j < t; ++j) d_w[i] += r.at(i, j) * x.values.at(i, j);
  RelevanceNet grad;
  const std::vector<double> d_pooled = relevance_backward(net, cache, d_w, &grad);
  Tensor d_x({f, t});
  for (std::size_t i = 0; i < f; ++i)
    for (std::size_t j = 0; j < t; ++j) d_x.at(i, j) = w.w[i] * r.at(i, j);
  add_pooling_backward(d_pooled, d_x);

  const double h = 1e-6;
  for (std::size_t i = 0; i < x.values.size(); ++i) {
    Spectrogram up = x, dn = x;
    up.values[i] += h;
    dn.values[i] -= h;
    const double fd = (gated_loss(up, net, r) - gated_loss(dn, net, r)) / (2 * h);
    EXPECT_LE(std::abs(d_x[i] - fd) / std::max(1.0, std::abs(fd)), 1e-4) << i;
  }
  auto check_param = [&](Tensor& param, const Tensor& g, const char* name) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double keep = param[i];
      param[i] = keep + h;
      const double lp = gated_loss(x, net, r);
      param[i] = keep - h;
      const double lm = gated_loss(x, net, r);
      param[i] = keep;
      const double fd = (lp - lm) / (2 * h);
      EXPECT_LE(std::abs(g[i] - fd) / std::max(1.0, std::abs(fd)), 1e-4) << name << " " << i;
    }
  };
  check_param(net.hidden.weight, grad.hidden.weight, "hidden.weight");
  check_param(net.hidden.bias, grad.hidden.bias, "hidden.bias");
  check_param(net.output.weight, grad.output.weight, "output.weight");
  check_param(net.output.bias, grad.output.bias, "output.bias");
}

TEST(RelevanceBackward, SoftmaxJacobianMatchesFiniteDifferences) {
  const std::vector<double> v{0.3, -1.2, 0.8, 0.1};
  const std::vector<double> dw{0.7, -0.4, 0.2, 1.1};
  const std::vector<double> d = softmax_backward(softmax(v), dw);
  const double h = 1e-6;
  for (std::size_t i = 0; i < 4; ++i) {
    auto up = v, dn = v;
    up[i] += h;
    dn[i] -= h;
    const auto a = softmax(up), b = softmax(dn);
    double fd = 0.0;
    for (std::size_t j = 0; j < 4; ++j) fd += dw[j] * (a[j] - b[j]) / (2 * h);
    EXPECT_NEAR(d[i], fd, 1e-8);
  }
}
