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

#include "zsr/align_lr.hpp"

#include <cmath>
#include <stdexcept>

namespace zsr::align {

WarpResult patch_flow_align(const ImagePlane& lr, const ImagePlane& gt,
                            flow::FlowProvider& fp) {
  if (gt.height % lr.height != 0 || gt.width % lr.width != 0 ||
      gt.height / lr.height != gt.width / lr.width)
    throw std::invalid_argument(
        "patch_flow_align: gt dims must be an integer multiple of lr dims");
  int r = gt.height / lr.height;
  ImagePlane gt_small = resize_bicubic(gt, 1.0 / r);
  auto flow = fp.estimate(gt_small, lr);
  if (!flow) return {lr, true};
  return {backward_warp(lr, *flow), false};
}

double position_preserving_loss(const Tensor& kernel) {
  Tensor w = kernel;
  if (w.ndim() == 2) w.shape = {1, 1, kernel.dim(0), kernel.dim(1)};
  if (w.ndim() != 4 || w.dim(2) != w.dim(3))
    throw std::invalid_argument("position_preserving_loss: bad kernel shape");
  if (w.dim(2) % 2 == 0)
    throw std::invalid_argument("position_preserving_loss: k must be odd");
  return ad::centroid_penalty(ad::leaf(w))->val.v[0];
}

AuxGenerator::AuxGenerator(nn::ParamStore& store,
                           const AuxGeneratorConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  if (cfg.r_t != 4)
    throw std::invalid_argument("AuxGenerator: stage strides assume r_t = 4");
  const int w = cfg.width;
  widths_ = {w, w, w, w, 3};
  const int strides[5] = {2, 2, 1, 1, 1};
  int cin = 3;
  for (int l = 0; l < 5; ++l) {
    convs_.emplace_back(store, "aux.conv" + std::to_string(l), cin, widths_[l],
                        3, strides[l], 1, nn::Role::kTrainOnly,
                        nn::OptGroup::kGenerator, rng);
    cin = widths_[static_cast<size_t>(l)];
  }
  int total = 0;
  for (int v : widths_) total += v;
  guide1_ = nn::Linear(store, "aux.guide1", 6, 32, nn::Role::kTrainOnly,
                       nn::OptGroup::kGenerator, rng);
  // Zero init: guidance starts as the identity gain.
  guide2_ = nn::Linear(store, "aux.guide2", 32, total, nn::Role::kTrainOnly,
                       nn::OptGroup::kGenerator, rng, /*zero_init=*/true);
}

ad::Var AuxGenerator::forward(nn::GraphCtx& g, const Tensor& gt_chw,
                              const Tensor& warped_lr_chw,
                              bool identity_guidance) const {
  // Spatially uniform guidance from warped-LR statistics (per-channel mean
  // and standard deviation); a single gain vector per stage cannot move
  // content around.
  std::vector<ad::Var> gains;
  if (!identity_guidance) {
    Tensor stats({6});
    int hw = warped_lr_chw.dim(1) * warped_lr_chw.dim(2);
    for (int c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (int i = 0; i < hw; ++i)
        mean += warped_lr_chw.v[static_cast<size_t>(c) * hw + i];
      mean /= hw;
      double var = 0.0;
      for (int i = 0; i < hw; ++i) {
        double d = warped_lr_chw.v[static_cast<size_t>(c) * hw + i] - mean;
        var += d * d;
      }
      stats.v[static_cast<size_t>(c)] = mean;
      stats.v[static_cast<size_t>(3 + c)] = std::sqrt(var / hw);
    }
    ad::Var z =
        guide2_.forward(g, ad::relu(guide1_.forward(g, ad::constant(stats))));
    int off = 0;
    for (int v : widths_) {
      gains.push_back(
          ad::mul_scalar(ad::sigmoid(ad::slice_vec(z, off, v)), 2.0));
      off += v;
    }
  }

  ad::Var x = ad::constant(gt_chw);
  for (size_t l = 0; l < convs_.size(); ++l) {
    x = convs_[l].forward(g, x);
    if (!identity_guidance) x = ad::scale_channels(x, gains[l]);
    if (l + 1 < convs_.size()) x = ad::relu(x);
  }
  return x;
}

ad::Var AuxGenerator::objective(nn::GraphCtx& g, const ad::Var& out,
                                const Tensor& warped_lr_chw,
                                double lambda_pos) const {
  ad::Var loss = ad::l1(out, ad::constant(warped_lr_chw));
  for (const auto& conv : convs_) {
    ad::Var pen = ad::centroid_penalty(g.leaf(conv.w_id));
    loss = ad::add(loss, ad::mul_scalar(pen, lambda_pos));
  }
  return loss;
}

ImagePlane inject_noise(const ImagePlane& aux, const NoiseSpec& spec,
                        uint64_t seed) {
  Rng rng(derive_seed(seed, 0x401c3));
  ImagePlane out = aux;
  bool gauss =
      spec.mode == NoiseMode::kGaussian || spec.mode == NoiseMode::kBoth;
  bool jpeg = spec.mode == NoiseMode::kJpeg || spec.mode == NoiseMode::kBoth;
  if (gauss) {
    double sigma = spec.forced_sigma ? *spec.forced_sigma
                                     : rng.uniform(5.0 / 255.0, 30.0 / 255.0);
    for (double& v : out.data) v += rng.normal(0.0, sigma);
    out = clip01(std::move(out));
  }
  if (jpeg) {
    int quality = spec.forced_quality
                      ? *spec.forced_quality
                      : 60 + static_cast<int>(rng.uniform_int(36));  // [60,95]
    out = jpeg_roundtrip(out, quality);
  }
  return out;
}

OffsetField offsets_from_affine(const Tensor& A, const Tensor& b) {
  OffsetField f;
  f.A = A;
  f.b = b;
  f.P = ad::offsets_from_affine(ad::constant(A), ad::constant(b))->val;
  return f;
}

DeformAlign::DeformAlign(nn::ParamStore& store, const std::string& name,
                         const DeformAlignConfig& cfg, Rng& rng)
    : cfg_(cfg),
      head_(store, name + ".head", 3, cfg.channels, 3, 1, 1, nn::Role::kInfer,
            nn::OptGroup::kMain, rng) {
  for (int s = 0; s < cfg.stages; ++s) {
    std::string sn = name + ".stage" + std::to_string(s);
    Stage st;
    st.est1 = nn::Conv2d(store, sn + ".est1", 2 * cfg.channels,
                         cfg.estimator_width, 3, 1, 1, nn::Role::kTrainOnly,
                         nn::OptGroup::kMain, rng);
    // Zero-initialized head; training starts in the zero-offset regime.
    st.est2 = nn::Conv2d(store, sn + ".est2", cfg.estimator_width, 6, 3, 1, 1,
                         nn::Role::kTrainOnly, nn::OptGroup::kMain, rng,
                         /*zero_init=*/true);
    // Nine-tap kernel summing approximately to identity.
    Tensor k({9, cfg.channels, cfg.channels});
    for (int t = 0; t < 9; ++t)
      for (int co = 0; co < cfg.channels; ++co)
        for (int ci = 0; ci < cfg.channels; ++ci) {
          double v = rng.normal(0.0, 0.02 / std::sqrt(9.0 * cfg.channels));
          if (co == ci) v += 1.0 / 9.0;
          k.at3(t, co, ci) = v;
        }
    st.kernel_id = store.add(sn + ".kernel", std::move(k), nn::Role::kInfer,
                             nn::OptGroup::kMain);
    stages_.push_back(std::move(st));
  }
}

ad::Var DeformAlign::head_features(nn::GraphCtx& g, const Tensor& img) const {
  return ad::relu(head_.forward(g, ad::constant(img)));
}

ad::Var DeformAlign::stage_offsets(nn::GraphCtx& g, int stage, const ad::Var& x,
                                   const ad::Var& aux_feat) const {
  const Stage& st = stages_[static_cast<size_t>(stage)];
  ad::Var h = ad::relu(st.est1.forward(g, ad::concat_ch({x, aux_feat})));
  ad::Var ab = st.est2.forward(g, h);  // (6,H,W): a00,a01,a10,a11,ty,tx
  ad::Var affine = ad::slice_ch(ab, 0, 4);
  ad::Var shift = ad::slice_ch(ab, 4, 2);
  return ad::offsets_from_affine(affine, shift);
}

ad::Var DeformAlign::stage_deform(nn::GraphCtx& g, int stage, const ad::Var& x,
                                  const ad::Var& offsets) const {
  const Stage& st = stages_[static_cast<size_t>(stage)];
  return ad::deform_conv3x3(x, offsets, g.leaf(st.kernel_id));
}

std::array<bool, 3> draw_stage_zeros(double p, uint64_t seed) {
  Rng rng(derive_seed(seed, 0x2e40));
  std::array<bool, 3> out;
  for (auto& z : out) z = rng.uniform() < p;
  return out;
}

ad::Var align_lr_features(nn::GraphCtx& g, const DeformAlign& align,
                          const Tensor& lr_img_chw,
                          const std::optional<Tensor>& aux_img_chw,
                          Phase phase, const std::array<bool, 3>& zero_draws) {
  if (phase == Phase::kTest && aux_img_chw.has_value())
    throw std::invalid_argument(
        "align_lr_features: auxiliary image is not available at test time");

  ad::Var x = align.head_features(g, lr_img_chw);
  ad::Var auxf;
  bool have_aux = phase == Phase::kTrain && aux_img_chw.has_value();
  if (have_aux) auxf = align.head_features(g, *aux_img_chw);

  int h = x->val.dim(1), w = x->val.dim(2);
  for (int s = 0; s < align.stages(); ++s) {
    ad::Var offsets;
    bool zero = phase == Phase::kTest || !have_aux ||
                zero_draws[static_cast<size_t>(s)];
    if (zero) {
      offsets = ad::constant(Tensor({18, h, w}));
    } else {
      offsets = align.stage_offsets(g, s, x, auxf);
    }
    x = align.stage_deform(g, s, x, offsets);
  }
  return x;
}

Tensor image_chw(const ImagePlane& img) {
  Tensor t({img.channels, img.height, img.width});
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) t.at3(c, y, x) = img.at(y, x, c);
  return t;
}

ImagePlane chw_image(const Tensor& t) {
  ImagePlane img(t.dim(1), t.dim(2), t.dim(0));
  for (int c = 0; c < t.dim(0); ++c)
    for (int y = 0; y < t.dim(1); ++y)
      for (int x = 0; x < t.dim(2); ++x) img.at(y, x, c) = t.at3(c, y, x);
  return img;
}

}  // namespace zsr::align
