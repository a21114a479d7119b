// Copyright 2026 the zsr authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <functional>

#include "zsr/tensor.hpp"

namespace zsr::testutil {

// Central finite differences of a scalar functional at one coordinate.
inline double numeric_grad(const std::function<double(const Tensor&)>& f,
                           Tensor at, size_t index, double eps = 1e-5) {
  double orig = at.v[index];
  at.v[index] = orig + eps;
  double hi = f(at);
  at.v[index] = orig - eps;
  double lo = f(at);
  at.v[index] = orig;
  return (hi - lo) / (2.0 * eps);
}

// Relative error tolerant of tiny magnitudes.
inline double rel_err(double got, double want) {
  double denom = std::max({std::fabs(got), std::fabs(want), 1e-6});
  return std::fabs(got - want) / denom;
}

}  // namespace zsr::testutil
