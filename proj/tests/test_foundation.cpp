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

#include <atomic>
#include <cmath>
#include <filesystem>
#include <limits>
#include <vector>

#include "relward/errors.hpp"
#include "relward/io.hpp"
#include "relward/parallel.hpp"
#include "relward/rng.hpp"
#include "relward/tensor.hpp"

namespace fs = std::filesystem;
using namespace relward;

TEST(Tensor, RowMajorIndexing) {
  Tensor t({2, 3, 4});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  EXPECT_EQ(t.at(1, 2, 3), 23.0);
  EXPECT_EQ(t.row(1)[0], 12.0);
  EXPECT_EQ(t.shape_string(), "[2x3x4]");
  Tensor u({2, 3, 4});
  EXPECT_TRUE(t.same_shape(u));
}

TEST(Tensor, FourDimensionalAccess) {
  Tensor t({2, 2, 2, 2}, 1.5);
  t.at(1, 0, 1, 1) = 7.0;
  EXPECT_EQ(t[8 + 2 + 1], 7.0);
  t.fill(0.0);
  EXPECT_EQ(t.at(1, 0, 1, 1), 0.0);
}

TEST(Rng, NamedStreamsAreIndependentAndRepeatable) {
  Rng a = make_rng(7, "init");
  Rng b = make_rng(7, "init");
  Rng c = make_rng(7, "shuffle");
  const double x = uniform(a, 0.0, 1.0);
  EXPECT_EQ(x, uniform(b, 0.0, 1.0));
  EXPECT_NE(x, uniform(c, 0.0, 1.0));
  EXPECT_NE(derive_seed(1, "data"), derive_seed(2, "data"));
}

TEST(Rng, UniformStaysInRangeAndGaussianHasUnitMoments) {
  Rng r = make_rng(3, "test");
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform(r, -2.0, 3.0);
    EXPECT_GE(u, -2.0);
    EXPECT_LT(u, 3.0);
  }
  for (int i = 0; i < n; ++i) {
    const double g = gaussian(r);
    sum += g;
    sq += g * g;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Io, DoubleFormattingRoundTripsBitExactly) {
  Rng r = make_rng(11, "fmt");
  for (int i = 0; i < 1000; ++i) {
    const double v = gaussian(r) * std::pow(10.0, uniform(r, -30.0, 30.0));
    EXPECT_EQ(parse_double(format_double(v)), v);
  }
  EXPECT_EQ(parse_double(format_double(std::numeric_limits<double>::denorm_min())),
            std::numeric_limits<double>::denorm_min());
}

TEST(Io, ParseDoubleRejectsTrailingGarbage) {
  EXPECT_THROW(parse_double("1.5x"), FormatError);
  EXPECT_THROW(parse_double(""), FormatError);
}

TEST(Io, AtomicWriteReplacesContents) {
  const fs::path dir = fs::temp_directory_path() / "relward_io_test";
  fs::create_directories(dir);
  const fs::path p = dir / "file.txt";
  write_file_atomic(p, "first");
  write_file_atomic(p, "second");
  EXPECT_EQ(read_file(p), "second");
  for (const auto& e : fs::directory_iterator(dir)) {
    EXPECT_EQ(e.path().filename(), "file.txt") << "temporary file left behind";
  }
  fs::remove_all(dir);
  EXPECT_THROW(read_file(dir / "missing"), Error);
}

TEST(Parallel, VisitsEveryIndexOnceAndPropagatesErrors) {
  std::vector<std::atomic<int>> hits(257);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(10, [](std::size_t i) {
                 if (i == 5) throw ContractError("boom");
               }),
               ContractError);
  EXPECT_GE(worker_count(), 1u);
}

TEST(Errors, HierarchyAllowsCatchingByBase) {
  EXPECT_THROW(throw UnsupportedFormatError("x"), FormatError);
  EXPECT_THROW(throw DataError("x"), Error);
  EXPECT_THROW(throw ContractError("x"), std::runtime_error);
}
