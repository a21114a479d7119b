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
#include <string>
#include <vector>

#include "zsr/image.hpp"
#include "zsr/nn.hpp"

namespace zsr::loss {

double l1_loss(const ImagePlane& a, const ImagePlane& b);

// Random projection with rows uniform on the unit sphere.
Tensor random_projection(int out_dims, int in_dims, Rng& rng);

// Sliced distribution distance over overlapping k x k patches: unfold both
// feature maps, project channels through m, sort along the patch axis per
// (patch, direction), mean absolute difference of the sorted tensors.
// Requires stride < k and k <= min(H, W).
ad::Var local_sliced_wasserstein(const ad::Var& u, const ad::Var& v,
                                 const Tensor& m, int k, int stride);

// Global variant: a single patch covering the full spatial extent.
ad::Var sliced_wasserstein(const ad::Var& u, const ad::Var& v,
                           const Tensor& m);

// Frozen random feature pyramid standing in for a pretrained network; three
// stages at scales 1, 1/2, 1/4.
class PerceptualPyramid {
 public:
  PerceptualPyramid(nn::ParamStore& store, const std::string& name,
                    uint64_t seed);
  // Features of the configured stages (0..2); input (3,H,W).
  std::vector<ad::Var> features(nn::GraphCtx& g, const ad::Var& img,
                                const std::vector<int>& stages) const;
  int stage_channels(int stage) const;

 private:
  nn::Conv2d s0_, s1_, s2_;
};

enum class LossArm { kL1, kL1GlobalSw, kL1LocalSw };

struct LossConfig {
  LossArm arm = LossArm::kL1LocalSw;
  double sw_weight = 0.08;
  int patch = 8;
  int stride = 4;
  int proj_dims = 0;  // 0: match the stage channel count
  std::vector<int> stages = {0, 1};
};

// ||yhat - t||_1 plus the configured sliced term on pyramid features, summed
// over stages, each with a fresh projection drawn from `proj_rng`.
ad::Var total_loss(nn::GraphCtx& g, const ad::Var& yhat, const Tensor& target,
                   const PerceptualPyramid& phi, const LossConfig& cfg,
                   Rng& proj_rng);

LossArm loss_arm_from_string(const std::string& s);
std::string loss_arm_to_string(LossArm arm);

}  // namespace zsr::loss
