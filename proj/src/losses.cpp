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

#include "zsr/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace zsr::loss {

double l1_loss(const ImagePlane& a, const ImagePlane& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("l1_loss: shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    acc += std::fabs(a.data[i] - b.data[i]);
  return acc / static_cast<double>(a.data.size());
}

Tensor random_projection(int out_dims, int in_dims, Rng& rng) {
  Tensor m({out_dims, in_dims});
  for (int r = 0; r < out_dims; ++r) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (int c = 0; c < in_dims; ++c) {
        double v = rng.normal();
        m.v[static_cast<size_t>(r) * in_dims + c] = v;
        norm += v * v;
      }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (int c = 0; c < in_dims; ++c)
      m.v[static_cast<size_t>(r) * in_dims + c] /= norm;
  }
  return m;
}

ad::Var local_sliced_wasserstein(const ad::Var& u, const ad::Var& v,
                                 const Tensor& m, int k, int stride) {
  if (!u->val.same_shape(v->val))
    throw std::invalid_argument("local_sliced_wasserstein: shape mismatch");
  int h = u->val.dim(1), w = u->val.dim(2);
  if (k > h || k > w)
    throw std::invalid_argument("local_sliced_wasserstein: k exceeds extent");
  bool single_patch = (k == h && k == w);
  if (!single_patch && stride >= k)
    throw std::invalid_argument(
        "local_sliced_wasserstein: stride must be smaller than k");
  auto pipeline = [&](const ad::Var& x) {
    ad::Var patches = ad::unfold_patches(x, k, stride);
    ad::Var proj = ad::project_patches(patches, m);
    return ad::sort_last(proj);
  };
  return ad::l1(pipeline(u), pipeline(v));
}

ad::Var sliced_wasserstein(const ad::Var& u, const ad::Var& v,
                           const Tensor& m) {
  if (!u->val.same_shape(v->val))
    throw std::invalid_argument("sliced_wasserstein: shape mismatch");
  int c = u->val.dim(0), h = u->val.dim(1), w = u->val.dim(2);
  auto pipeline = [&](const ad::Var& x) {
    ad::Var flat = ad::reshape(x, {1, c, h * w});
    ad::Var proj = ad::project_patches(flat, m);
    return ad::sort_last(proj);
  };
  return ad::l1(pipeline(u), pipeline(v));
}

PerceptualPyramid::PerceptualPyramid(nn::ParamStore& store,
                                     const std::string& name, uint64_t seed) {
  Rng rng(derive_seed(seed, 0xf3a7));
  s0_ = nn::Conv2d(store, name + ".s0", 3, 12, 3, 1, 1, nn::Role::kFrozen,
                   nn::OptGroup::kNone, rng);
  s1_ = nn::Conv2d(store, name + ".s1", 12, 16, 3, 2, 1, nn::Role::kFrozen,
                   nn::OptGroup::kNone, rng);
  s2_ = nn::Conv2d(store, name + ".s2", 16, 16, 3, 2, 1, nn::Role::kFrozen,
                   nn::OptGroup::kNone, rng);
}

int PerceptualPyramid::stage_channels(int stage) const {
  return stage == 0 ? 12 : 16;
}

std::vector<ad::Var> PerceptualPyramid::features(
    nn::GraphCtx& g, const ad::Var& img, const std::vector<int>& stages) const {
  std::vector<ad::Var> out;
  ad::Var f0 = ad::relu(s0_.forward(g, img));
  ad::Var f1, f2;
  int max_stage = 0;
  for (int s : stages) max_stage = std::max(max_stage, s);
  if (max_stage >= 1) f1 = ad::relu(s1_.forward(g, f0));
  if (max_stage >= 2) f2 = ad::relu(s2_.forward(g, f1));
  for (int s : stages) {
    if (s == 0) out.push_back(f0);
    else if (s == 1) out.push_back(f1);
    else if (s == 2) out.push_back(f2);
    else throw std::invalid_argument("PerceptualPyramid: stage out of range");
  }
  return out;
}

ad::Var total_loss(nn::GraphCtx& g, const ad::Var& yhat, const Tensor& target,
                   const PerceptualPyramid& phi, const LossConfig& cfg,
                   Rng& proj_rng) {
  if (!(yhat->val.shape == target.shape))
    throw std::invalid_argument("total_loss: shape mismatch");
  ad::Var tgt = ad::constant(target);
  ad::Var loss = ad::l1(yhat, tgt);
  if (cfg.arm == LossArm::kL1 || cfg.sw_weight == 0.0) return loss;

  std::vector<ad::Var> fy = phi.features(g, yhat, cfg.stages);
  std::vector<ad::Var> ft = phi.features(g, tgt, cfg.stages);
  for (size_t i = 0; i < cfg.stages.size(); ++i) {
    int c = fy[i]->val.dim(0);
    int cp = cfg.proj_dims > 0 ? cfg.proj_dims : c;
    Tensor m = random_projection(cp, c, proj_rng);
    ad::Var term;
    if (cfg.arm == LossArm::kL1GlobalSw) {
      term = sliced_wasserstein(fy[i], ft[i], m);
    } else {
      int h = fy[i]->val.dim(1), w = fy[i]->val.dim(2);
      int k = std::min({cfg.patch, h, w});
      int stride = std::min(cfg.stride, std::max(1, k - 1));
      term = local_sliced_wasserstein(fy[i], ft[i], m, k, stride);
    }
    loss = ad::add(loss, ad::mul_scalar(term, cfg.sw_weight));
  }
  return loss;
}

LossArm loss_arm_from_string(const std::string& s) {
  if (s == "l1") return LossArm::kL1;
  if (s == "l1_sw") return LossArm::kL1GlobalSw;
  if (s == "l1_losw") return LossArm::kL1LocalSw;
  throw std::invalid_argument("unknown loss arm: " + s);
}

std::string loss_arm_to_string(LossArm arm) {
  switch (arm) {
    case LossArm::kL1: return "l1";
    case LossArm::kL1GlobalSw: return "l1_sw";
    case LossArm::kL1LocalSw: return "l1_losw";
  }
  return "l1";
}

}  // namespace zsr::loss
