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

#include "zsr/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace zsr::nn {

int ParamStore::add(const std::string& name, Tensor init, Role role,
                    OptGroup group) {
  if (index_.count(name))
    throw std::invalid_argument("ParamStore: duplicate name " + name);
  Param p;
  p.name = name;
  p.value = std::move(init);
  p.role = role;
  p.group = group;
  int id = static_cast<int>(params_.size());
  params_.push_back(std::move(p));
  index_[name] = id;
  return id;
}

int ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

ad::Var GraphCtx::leaf(int param_id) {
  auto it = leaves_.find(param_id);
  if (it != leaves_.end()) return it->second;
  const Param& p = store_->at(param_id);
  ad::Var v = (p.role == Role::kFrozen || !training_)
                  ? ad::constant(p.value)
                  : ad::leaf(p.value);
  leaves_[param_id] = v;
  return v;
}

Tensor GraphCtx::grad(int param_id) const {
  auto it = leaves_.find(param_id);
  if (it == leaves_.end() || it->second->grad.v.empty()) return Tensor();
  return it->second->grad;
}

void GradAccumulator::add(int param_id, const Tensor& g) {
  if (g.v.empty()) return;
  Tensor& dst = grads_[static_cast<size_t>(param_id)];
  if (dst.v.empty()) {
    dst = g;
    return;
  }
  for (size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += g.v[i];
}

void GradAccumulator::scale(double s) {
  for (Tensor& t : grads_)
    for (double& v : t.v) v *= s;
}

void Adam::step(ParamStore& store, const GradAccumulator& grads,
                OptGroup group) {
  ++t;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (size_t id = 0; id < store.size(); ++id) {
    Param& p = store.at(static_cast<int>(id));
    if (p.group != group || p.role == Role::kFrozen) continue;
    if (!grads.has(static_cast<int>(id))) continue;
    const Tensor& g = grads.at(static_cast<int>(id));
    if (p.adam_m.v.empty()) {
      p.adam_m = Tensor(p.value.shape);
      p.adam_v = Tensor(p.value.shape);
    }
    for (size_t i = 0; i < p.value.v.size(); ++i) {
      double gi = g.v[i];
      p.adam_m.v[i] = beta1 * p.adam_m.v[i] + (1.0 - beta1) * gi;
      p.adam_v.v[i] = beta2 * p.adam_v.v[i] + (1.0 - beta2) * gi * gi;
      double mhat = p.adam_m.v[i] / bc1;
      double vhat = p.adam_v.v[i] / bc2;
      p.value.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

Tensor he_normal(const std::vector<int>& shape, int fan_in, Rng& rng) {
  Tensor t(shape);
  double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : t.v) v = rng.normal(0.0, std);
  return t;
}

Conv2d::Conv2d(ParamStore& store, const std::string& name, int cin, int cout,
               int k, int stride_, int pad_, Role role, OptGroup group,
               Rng& rng, bool zero_init, bool bias)
    : stride(stride_), pad(pad_) {
  Tensor w = zero_init ? Tensor({cout, cin, k, k})
                       : he_normal({cout, cin, k, k}, cin * k * k, rng);
  w_id = store.add(name + ".w", std::move(w), role, group);
  if (bias) b_id = store.add(name + ".b", Tensor({cout}), role, group);
}

ad::Var Conv2d::forward(GraphCtx& g, const ad::Var& x) const {
  ad::Var b = b_id >= 0 ? g.leaf(b_id) : nullptr;
  return ad::conv2d(x, g.leaf(w_id), b, stride, pad);
}

Linear::Linear(ParamStore& store, const std::string& name, int n_in, int n_out,
               Role role, OptGroup group, Rng& rng, bool zero_init) {
  Tensor w = zero_init ? Tensor({n_out, n_in})
                       : he_normal({n_out, n_in}, n_in, rng);
  w_id = store.add(name + ".w", std::move(w), role, group);
  b_id = store.add(name + ".b", Tensor({n_out}), role, group);
}

ad::Var Linear::forward(GraphCtx& g, const ad::Var& x) const {
  return ad::linear(x, g.leaf(w_id), g.leaf(b_id));
}

}  // namespace zsr::nn
