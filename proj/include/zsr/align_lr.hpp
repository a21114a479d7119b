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

#include <array>
#include <optional>

#include "zsr/flow.hpp"
#include "zsr/image.hpp"
#include "zsr/nn.hpp"

namespace zsr::align {

// --- stage 1: patch-based flow warping ---------------------------------------

struct WarpResult {
  ImagePlane warped;
  bool flow_failed = false;  // estimation failed; warped == lr
};

// Downscales gt to the LR working grid, estimates gt->lr flow there and
// backward-warps lr toward gt. On estimation failure returns lr untouched
// with the flag set.
WarpResult patch_flow_align(const ImagePlane& lr, const ImagePlane& gt,
                            flow::FlowProvider& fp);

// --- centroid (position) penalty ---------------------------------------------

// |sum_i (i-k/2+0.5) w_ij| + |sum_j (j-k/2+0.5) w_ij| per channel pair,
// averaged over pairs. Accepts (k,k) or (Co,Ci,k,k).
double position_preserving_loss(const Tensor& kernel);

// --- auxiliary image generator (position-preserving, train-only) -------------

struct AuxGeneratorConfig {
  int width = 16;
  int r_t = 4;  // product of stage strides
};

// Five 3x3 convolutions, strides (2,2,1,1,1), channels 3-w-w-w-w-3, each
// followed by a spatially uniform guidance gain derived from warped-LR
// statistics. Every spatial op is centroid-penalized so the output cannot
// drift relative to its high-resolution input.
class AuxGenerator {
 public:
  AuxGenerator(nn::ParamStore& store, const AuxGeneratorConfig& cfg, Rng& rng);

  ad::Var forward(nn::GraphCtx& g, const Tensor& gt_chw,
                  const Tensor& warped_lr_chw,
                  bool identity_guidance = false) const;

  // ||out - warped_lr||_1 + lambda_pos * sum_l centroid_penalty(W_l)
  ad::Var objective(nn::GraphCtx& g, const ad::Var& out,
                    const Tensor& warped_lr_chw, double lambda_pos) const;

  const std::vector<nn::Conv2d>& backbone() const { return convs_; }

 private:
  AuxGeneratorConfig cfg_;
  std::vector<nn::Conv2d> convs_;
  std::vector<int> widths_;
  nn::Linear guide1_, guide2_;
};

// --- noise injection ----------------------------------------------------------

enum class NoiseMode { kNone, kGaussian, kJpeg, kBoth };

struct NoiseSpec {
  NoiseMode mode = NoiseMode::kBoth;
  std::optional<double> forced_sigma;  // otherwise U[5/255, 30/255]
  std::optional<int> forced_quality;   // otherwise U[60, 95]
};

ImagePlane inject_noise(const ImagePlane& aux, const NoiseSpec& spec,
                        uint64_t seed);

// --- stage 2: offset-deformed feature alignment -------------------------------

// Offsets from a per-pixel affine head over the fixed 3x3 neighborhood
// coding; mirrors ad::offsets_from_affine for plain tensors.
struct OffsetField {
  Tensor A;  // (4,H,W): a00,a01,a10,a11
  Tensor b;  // (2,H,W)
  Tensor P;  // (18,H,W): dy_k, dx_k interleaved per tap
};

OffsetField offsets_from_affine(const Tensor& A, const Tensor& b);

struct DeformAlignConfig {
  int channels = 16;
  int estimator_width = 16;
  int stages = 3;
};

// Feature head plus a stack of offset-deformed 3x3 convolutions. During
// training each stage estimates per-pixel offsets from the concatenated
// (current, auxiliary) features, with an independent chance of running the
// stage at zero offsets. At test time every stage runs at zero offsets and
// the estimators are never evaluated.
class DeformAlign {
 public:
  DeformAlign(nn::ParamStore& store, const std::string& name,
              const DeformAlignConfig& cfg, Rng& rng);

  ad::Var head_features(nn::GraphCtx& g, const Tensor& img_chw) const;

  // Offset field of one stage given current and auxiliary features.
  ad::Var stage_offsets(nn::GraphCtx& g, int stage, const ad::Var& x,
                        const ad::Var& aux_feat) const;

  // One deformed convolution with the stage's 9-tap kernel.
  ad::Var stage_deform(nn::GraphCtx& g, int stage, const ad::Var& x,
                       const ad::Var& offsets) const;

  int stages() const { return cfg_.stages; }
  int channels() const { return cfg_.channels; }

 private:
  DeformAlignConfig cfg_;
  nn::Conv2d head_;
  struct Stage {
    nn::Conv2d est1, est2;  // train-only
    int kernel_id;          // (9,C,C), inference weights
  };
  std::vector<Stage> stages_;
};

enum class Phase { kTrain, kTest };

// Full alignment path. Train phase requires the auxiliary image and applies
// the given per-stage zero draws; test phase rejects an auxiliary image and
// runs all stages at zero offsets.
ad::Var align_lr_features(nn::GraphCtx& g, const DeformAlign& align,
                          const Tensor& lr_img_chw,
                          const std::optional<Tensor>& aux_img_chw,
                          Phase phase, const std::array<bool, 3>& zero_draws);

// Independent per-stage zero draws at probability p.
std::array<bool, 3> draw_stage_zeros(double p, uint64_t seed);

Tensor image_chw(const ImagePlane& img);
ImagePlane chw_image(const Tensor& t);

}  // namespace zsr::align
