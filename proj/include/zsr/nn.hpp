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

#include <string>
#include <unordered_map>
#include <vector>

#include "zsr/autodiff.hpp"
#include "zsr/rng.hpp"
#include "zsr/tensor.hpp"

namespace zsr::nn {

// Role of a parameter group with respect to the train/test boundary.
//  - kInfer: used during both training and inference.
//  - kTrainOnly: optimized during training, detached at inference.
//  - kFrozen: fixed at construction (seeded), never optimized.
enum class Role { kInfer, kTrainOnly, kFrozen };

// Optimizer family; train-only parameters of the generator live in their own
// optimizer instance.
enum class OptGroup { kMain, kGenerator, kNone };

struct Param {
  std::string name;
  Tensor value;
  Role role = Role::kInfer;
  OptGroup group = OptGroup::kMain;
  Tensor adam_m;
  Tensor adam_v;
};

class ParamStore {
 public:
  int add(const std::string& name, Tensor init, Role role, OptGroup group);
  Param& at(int id) { return params_[static_cast<size_t>(id)]; }
  const Param& at(int id) const { return params_[static_cast<size_t>(id)]; }
  int find(const std::string& name) const;  // -1 when absent
  size_t size() const { return params_.size(); }
  std::vector<Param>& all() { return params_; }
  const std::vector<Param>& all() const { return params_; }

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, int> index_;
};

// Per-sample graph context. Leaves created once per parameter so gradients
// can be read back after backward(). In inference mode every leaf is a
// constant and no gradient bookkeeping happens.
class GraphCtx {
 public:
  GraphCtx() = default;
  explicit GraphCtx(const ParamStore* store, bool training = true)
      : store_(store), training_(training) {}

  ad::Var leaf(int param_id);
  // Gradient of a parameter leaf in this graph; empty tensor if unused.
  Tensor grad(int param_id) const;

 private:
  const ParamStore* store_ = nullptr;
  bool training_ = true;
  std::unordered_map<int, ad::Var> leaves_;
};

// Accumulates per-parameter gradients across samples in a fixed order.
class GradAccumulator {
 public:
  explicit GradAccumulator(size_t n) : grads_(n) {}
  void add(int param_id, const Tensor& g);
  const Tensor& at(int id) const { return grads_[static_cast<size_t>(id)]; }
  bool has(int id) const { return !grads_[static_cast<size_t>(id)].v.empty(); }
  void scale(double s);

 private:
  std::vector<Tensor> grads_;
};

struct Adam {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t t = 0;

  // Applies one update to every parameter of `group` with a gradient present.
  void step(ParamStore& store, const GradAccumulator& grads, OptGroup group);
};

// --- layers -----------------------------------------------------------------

struct Conv2d {
  int w_id = -1;
  int b_id = -1;
  int stride = 1;
  int pad = 0;

  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, int cin, int cout, int k,
         int stride, int pad, Role role, OptGroup group, Rng& rng,
         bool zero_init = false, bool bias = true);
  ad::Var forward(GraphCtx& g, const ad::Var& x) const;
};

struct Linear {
  int w_id = -1;
  int b_id = -1;

  Linear() = default;
  Linear(ParamStore& store, const std::string& name, int n_in, int n_out,
         Role role, OptGroup group, Rng& rng, bool zero_init = false);
  ad::Var forward(GraphCtx& g, const ad::Var& x) const;
};

Tensor he_normal(const std::vector<int>& shape, int fan_in, Rng& rng);

}  // namespace zsr::nn
