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

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace zsr {

// Dense row-major tensor of doubles, up to 4 dims. The numeric workhorse
// behind the differentiable graph.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
    v.assign(static_cast<size_t>(numel_of(shape)), fill);
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }
  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape.size()); }

  double& operator[](size_t i) { return v[i]; }
  double operator[](size_t i) const { return v[i]; }

  // Indexing helpers for the common layouts.
  double& at3(int c, int y, int x) {
    return v[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  double at3(int c, int y, int x) const {
    return v[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  double& at4(int a, int b, int c, int d) {
    return v[((static_cast<size_t>(a) * shape[1] + b) * shape[2] + c) *
                 shape[3] +
             d];
  }
  double at4(int a, int b, int c, int d) const {
    return v[((static_cast<size_t>(a) * shape[1] + b) * shape[2] + c) *
                 shape[3] +
             d];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace zsr
