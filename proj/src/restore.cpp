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

#include "zsr/restore.hpp"

#include <stdexcept>

namespace zsr::restore {

RestorationCore::RestorationCore(nn::ParamStore& store, const NetConfig& cfg,
                                 Rng& rng)
    : cfg_(cfg) {
  if (cfg.r_t != 4)
    throw std::invalid_argument("RestorationCore: upsampler assumes r_t = 4");
  const int c = cfg.width;

  int first_in = 2 * c;
  if (cfg.ref_mode == RefMode::kBoth && cfg.fusion == Fusion::kConcatAll)
    first_in = 3 * c;
  fuse_a_ = nn::Conv2d(store, "net.fuse_a", first_in, c, 3, 1, 1,
                       nn::Role::kInfer, nn::OptGroup::kMain, rng);
  if (cfg.ref_mode == RefMode::kBoth && cfg.fusion != Fusion::kConcatAll)
    fuse_b_ = nn::Conv2d(store, "net.fuse_b", 2 * c, c, 3, 1, 1,
                         nn::Role::kInfer, nn::OptGroup::kMain, rng);

  blocks_.reserve(static_cast<size_t>(cfg.blocks));
  for (int i = 0; i < cfg.blocks; ++i) {
    Block b;
    b.c1 = nn::Conv2d(store, "net.rb" + std::to_string(i) + ".c1", c, c, 3, 1,
                      1, nn::Role::kInfer, nn::OptGroup::kMain, rng);
    b.c2 = nn::Conv2d(store, "net.rb" + std::to_string(i) + ".c2", c, c, 3, 1,
                      1, nn::Role::kInfer, nn::OptGroup::kMain, rng);
    blocks_.push_back(std::move(b));
  }

  const int e = cfg.encoder_width;
  enc0_ = nn::Conv2d(store, "net.enc0", c + 6, e, 3, 2, 1, nn::Role::kInfer,
                     nn::OptGroup::kMain, rng);
  enc1_ = nn::Conv2d(store, "net.enc1", e, e, 3, 2, 1, nn::Role::kInfer,
                     nn::OptGroup::kMain, rng);
  enc2_ = nn::Conv2d(store, "net.enc2", e, e, 3, 2, 1, nn::Role::kInfer,
                     nn::OptGroup::kMain, rng);
  enc3_ = nn::Conv2d(store, "net.enc3", e, e, 3, 1, 1, nn::Role::kInfer,
                     nn::OptGroup::kMain, rng);
  enc_fc1_ = nn::Linear(store, "net.enc_fc1", e, e, nn::Role::kInfer,
                        nn::OptGroup::kMain, rng);
  // Zero init: every block starts at the identity modulation.
  enc_fc2_ = nn::Linear(store, "net.enc_fc2", e, cfg.blocks * c,
                        nn::Role::kInfer, nn::OptGroup::kMain, rng,
                        /*zero_init=*/true);

  up1_ = nn::Conv2d(store, "net.up1", c, 4 * c, 3, 1, 1, nn::Role::kInfer,
                    nn::OptGroup::kMain, rng);
  up2_ = nn::Conv2d(store, "net.up2", c, 4 * c, 3, 1, 1, nn::Role::kInfer,
                    nn::OptGroup::kMain, rng);
  // Zero init: the untrained network reproduces the interpolation base.
  tail_ = nn::Conv2d(store, "net.tail", c, 3, 3, 1, 1, nn::Role::kInfer,
                     nn::OptGroup::kMain, rng, /*zero_init=*/true);
}

std::vector<ad::Var> RestorationCore::modulation_vectors(
    nn::GraphCtx& g, const ad::Var& fused, const Tensor& ref_img,
    const Tensor& center_img) const {
  ad::Var enc_in = ad::concat_ch(
      {fused, ad::constant(ref_img), ad::constant(center_img)});
  ad::Var x = ad::relu(enc0_.forward(g, enc_in));
  x = ad::relu(enc1_.forward(g, x));
  x = ad::relu(enc2_.forward(g, x));
  x = ad::relu(enc3_.forward(g, x));
  ad::Var pooled = ad::gap2d(x);
  ad::Var z = enc_fc2_.forward(g, ad::relu(enc_fc1_.forward(g, pooled)));
  std::vector<ad::Var> vectors;
  vectors.reserve(static_cast<size_t>(cfg_.blocks));
  for (int i = 0; i < cfg_.blocks; ++i)
    vectors.push_back(ad::mul_scalar(
        ad::sigmoid(ad::slice_vec(z, i * cfg_.width, cfg_.width)), 2.0));
  return vectors;
}

ad::Var RestorationCore::fused_input(nn::GraphCtx& g, const Inputs& in) const {
  switch (cfg_.ref_mode) {
    case RefMode::kTeleOnly:
      return fuse_a_.forward(g, ad::concat_ch({in.aligned_lr, in.ref_t_feats}));
    case RefMode::kWideOnly:
      return fuse_a_.forward(g, ad::concat_ch({in.aligned_lr, in.ref_w_feats}));
    case RefMode::kBoth:
      switch (cfg_.fusion) {
        case Fusion::kConcatAll:
          return fuse_a_.forward(
              g, ad::concat_ch({in.aligned_lr, in.ref_w_feats, in.ref_t_feats}));
        case Fusion::kWThenT:
          return fuse_a_.forward(g,
                                 ad::concat_ch({in.aligned_lr, in.ref_w_feats}));
        case Fusion::kTThenW:
          return fuse_a_.forward(g,
                                 ad::concat_ch({in.aligned_lr, in.ref_t_feats}));
      }
  }
  throw std::logic_error("invalid ref mode");
}

ad::Var RestorationCore::forward(nn::GraphCtx& g, const Inputs& in) const {
  ad::Var f0 = fused_input(g, in);
  std::vector<ad::Var> mods =
      modulation_vectors(g, f0, in.encoder_ref_img, in.encoder_center_img);

  bool staged = cfg_.ref_mode == RefMode::kBoth &&
                cfg_.fusion != Fusion::kConcatAll;
  ad::Var x = f0;
  for (int i = 0; i < cfg_.blocks; ++i) {
    if (staged && i == cfg_.fusion_split) {
      const ad::Var& second = cfg_.fusion == Fusion::kWThenT ? in.ref_t_feats
                                                             : in.ref_w_feats;
      x = fuse_b_.forward(g, ad::concat_ch({x, second}));
    }
    const Block& b = blocks_[static_cast<size_t>(i)];
    ad::Var r = b.c2.forward(g, ad::relu(b.c1.forward(g, x)));
    x = ad::add(x, ad::scale_channels(r, mods[static_cast<size_t>(i)]));
  }
  x = ad::add(x, f0);

  x = ad::pixel_shuffle_op(up1_.forward(g, x), 2);
  x = ad::pixel_shuffle_op(up2_.forward(g, x), 2);
  ad::Var out = tail_.forward(g, x);
  return ad::add(out, ad::constant(in.base));
}

}  // namespace zsr::restore
