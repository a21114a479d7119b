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

#include <optional>
#include <string>

#include "zsr/nn.hpp"

namespace zsr::restore {

// Which reference branches feed the backbone.
enum class RefMode { kTeleOnly, kWideOnly, kBoth };
// How two reference branches merge into the backbone.
enum class Fusion { kWThenT, kTThenW, kConcatAll };

struct NetConfig {
  int width = 64;
  int blocks = 16;
  int encoder_width = 24;
  int fusion_split = 8;  // blocks before the second reference merges
  int r_t = 4;
  RefMode ref_mode = RefMode::kTeleOnly;
  Fusion fusion = Fusion::kWThenT;
};

// Fusion adapters, modulated residual backbone, sub-pixel upsampler. The
// per-block modulation vectors come from an encoder conditioned on the fused
// features, the reference image, and the central area of the network input;
// each vector scales the block's residual branch channel-wise in (0, 2).
class RestorationCore {
 public:
  RestorationCore(nn::ParamStore& store, const NetConfig& cfg, Rng& rng);

  struct Inputs {
    ad::Var aligned_lr;                // (C,H,W)
    ad::Var ref_t_feats;               // present per ref mode
    ad::Var ref_w_feats;               // present per ref mode
    Tensor encoder_ref_img;            // (3,H,W)
    Tensor encoder_center_img;         // (3,H,W)
    Tensor base;                       // (3, r_t*H, r_t*W), added to the tail
  };

  ad::Var forward(nn::GraphCtx& g, const Inputs& in) const;

  // The per-block modulation vectors for a given fused feature map.
  std::vector<ad::Var> modulation_vectors(nn::GraphCtx& g, const ad::Var& fused,
                                          const Tensor& ref_img,
                                          const Tensor& center_img) const;

  const NetConfig& config() const { return cfg_; }

 private:
  ad::Var fused_input(nn::GraphCtx& g, const Inputs& in) const;

  NetConfig cfg_;
  nn::Conv2d fuse_a_;                 // first fusion adapter
  nn::Conv2d fuse_b_;                 // mid-backbone adapter (kBoth, staged)
  struct Block {
    nn::Conv2d c1, c2;
  };
  std::vector<Block> blocks_;
  nn::Conv2d enc0_, enc1_, enc2_, enc3_;
  nn::Linear enc_fc1_, enc_fc2_;
  nn::Conv2d up1_, up2_, tail_;
};

}  // namespace zsr::restore
