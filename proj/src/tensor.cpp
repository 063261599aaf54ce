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

#include "relward/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "relward/errors.hpp"

namespace relward {

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)) {
  if (shape_.empty() || shape_.size() > 4) {
    throw ArgumentError("tensor rank must be 1..4, got " +
                        std::to_string(shape_.size()));
  }
  const std::size_t n = std::accumulate(shape_.begin(), shape_.end(),
                                        std::size_t{1}, std::multiplies<>());
  data_.assign(n, fill);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string Tensor::shape_string() const {
  std::string out = "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape_[i]);
  }
  return out + "]";
}

}  // namespace relward
