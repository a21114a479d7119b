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

#include "zsr/align_ref.hpp"

#include <cmath>
#include <stdexcept>

#include "zsr/align_lr.hpp"

namespace zsr::match {

MatchFeatureExtractor::MatchFeatureExtractor(nn::ParamStore& store,
                                             const std::string& name,
                                             int channels, uint64_t seed)
    : store_(&store), channels_(channels) {
  Rng rng(derive_seed(seed, 0x3eed));
  c1_ = nn::Conv2d(store, name + ".c1", 3, channels, 3, 2, 1, nn::Role::kFrozen,
                   nn::OptGroup::kNone, rng, false, /*bias=*/false);
  c2_ = nn::Conv2d(store, name + ".c2", channels, channels, 3, 2, 1,
                   nn::Role::kFrozen, nn::OptGroup::kNone, rng, false,
                   /*bias=*/false);
  // 1x1 mixing stage keeps the receptive field compact (7 px), so patch
  // border cells lose as little context as possible.
  c3_ = nn::Conv2d(store, name + ".c3", channels, channels, 1, 1, 0,
                   nn::Role::kFrozen, nn::OptGroup::kNone, rng, false,
                   /*bias=*/false);
  // Zero-sum kernels: responses ignore constant offsets, and cosine scores of
  // unrelated content sit near zero instead of sharing a mean direction.
  for (const nn::Conv2d* conv : {&c1_, &c2_, &c3_}) {
    Tensor& w = store.at(conv->w_id).value;
    int co = w.dim(0);
    int per = static_cast<int>(w.numel()) / co;
    for (int o = 0; o < co; ++o) {
      double mean = 0.0;
      for (int i = 0; i < per; ++i) mean += w.v[static_cast<size_t>(o) * per + i];
      mean /= per;
      for (int i = 0; i < per; ++i) w.v[static_cast<size_t>(o) * per + i] -= mean;
    }
  }
}

FeatureMap MatchFeatureExtractor::extract(const ImagePlane& img) const {
  if (img.height % 4 != 0 || img.width % 4 != 0)
    throw std::invalid_argument(
        "MatchFeatureExtractor: dims must be divisible by 4");
  // Replicate-pad so features describe content rather than their distance to
  // the image border; the contaminated ring is dropped afterwards.
  const int pad = 8;
  ImagePlane padded(img.height + 2 * pad, img.width + 2 * pad, img.channels);
  for (int y = 0; y < padded.height; ++y)
    for (int x = 0; x < padded.width; ++x) {
      int sy = std::clamp(y - pad, 0, img.height - 1);
      int sx = std::clamp(x - pad, 0, img.width - 1);
      for (int c = 0; c < img.channels; ++c)
        padded.at(y, x, c) = img.at(sy, sx, c);
    }
  nn::GraphCtx g(store_);
  ad::Var x = ad::constant(align::image_chw(padded));
  x = ad::relu(c1_.forward(g, x));
  x = ad::relu(c2_.forward(g, x));
  x = c3_.forward(g, x);
  const int ring = pad / 4;
  FeatureMap f(channels_, img.height / 4, img.width / 4);
  for (int c = 0; c < channels_; ++c)
    for (int y = 0; y < f.height; ++y)
      for (int xx = 0; xx < f.width; ++xx)
        f.at(c, y, xx) = x->val.at3(c, y + ring, xx + ring);
  return f;
}

IndexMap match_index_map(const FeatureMap& ref_feat,
                         const FeatureMap& anchor_feat) {
  if (ref_feat.channels != anchor_feat.channels)
    throw std::invalid_argument("match_index_map: channel mismatch");
  if (ref_feat.height < 1 || ref_feat.width < 1 || anchor_feat.height < 1 ||
      anchor_feat.width < 1)
    throw std::invalid_argument("match_index_map: empty feature map");
  const int c = ref_feat.channels;
  const int rh = ref_feat.height, rw = ref_feat.width;
  const int ah = anchor_feat.height, aw = anchor_feat.width;

  // Precompute reference norms.
  std::vector<double> ref_norm(static_cast<size_t>(rh) * rw, 0.0);
  for (int y = 0; y < rh; ++y)
    for (int x = 0; x < rw; ++x) {
      double acc = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        double v = ref_feat.at(ch, y, x);
        acc += v * v;
      }
      ref_norm[static_cast<size_t>(y) * rw + x] = std::sqrt(acc);
    }

  IndexMap out;
  out.height = ah;
  out.width = aw;
  out.ref_height = rh;
  out.ref_width = rw;
  out.idx_y.assign(static_cast<size_t>(ah) * aw, 0);
  out.idx_x.assign(static_cast<size_t>(ah) * aw, 0);
  out.score.assign(static_cast<size_t>(ah) * aw, 0.0);

  std::vector<double> avec(static_cast<size_t>(c));
  for (int y = 0; y < ah; ++y)
    for (int x = 0; x < aw; ++x) {
      double anorm = 0.0;
      for (int ch = 0; ch < c; ++ch) {
        avec[static_cast<size_t>(ch)] = anchor_feat.at(ch, y, x);
        anorm += avec[static_cast<size_t>(ch)] * avec[static_cast<size_t>(ch)];
      }
      anorm = std::sqrt(anorm);
      double best = -2.0;
      int by = 0, bx = 0;
      for (int ry = 0; ry < rh; ++ry)
        for (int rx = 0; rx < rw; ++rx) {
          double sim = 0.0;
          double rn = ref_norm[static_cast<size_t>(ry) * rw + rx];
          if (anorm > 0.0 && rn > 0.0) {
            double dot = 0.0;
            for (int ch = 0; ch < c; ++ch)
              dot += avec[static_cast<size_t>(ch)] * ref_feat.at(ch, ry, rx);
            sim = dot / (anorm * rn);
          }
          if (sim > best) {  // strict: ties keep the smallest raster index
            best = sim;
            by = ry;
            bx = rx;
          }
        }
      size_t i = static_cast<size_t>(y) * aw + x;
      out.idx_y[i] = by;
      out.idx_x[i] = bx;
      out.score[i] = best;
    }
  return out;
}

FeatureMap warp_ref(const FeatureMap& ref_feat, const IndexMap& idx) {
  if (idx.ref_height != ref_feat.height || idx.ref_width != ref_feat.width)
    throw std::invalid_argument("warp_ref: index map built for another grid");
  FeatureMap out(ref_feat.channels, idx.height, idx.width, ref_feat.scale);
  for (int c = 0; c < ref_feat.channels; ++c)
    for (int y = 0; y < idx.height; ++y)
      for (int x = 0; x < idx.width; ++x)
        out.at(c, y, x) = ref_feat.at(c, idx.at_y(y, x), idx.at_x(y, x));
  return out;
}

FeatureMap center_paste(const FeatureMap& warped_ref, const FeatureMap& ref,
                        int r) {
  FeatureMap packed = pixel_unshuffle(ref, r);
  if (packed.channels != warped_ref.channels)
    throw std::invalid_argument("center_paste: channel mismatch after pack");
  if (packed.height > warped_ref.height || packed.width > warped_ref.width)
    throw std::invalid_argument("center_paste: window exceeds feature dims");
  FeatureMap out = warped_ref;
  int y0 = (warped_ref.height - packed.height) / 2;
  int x0 = (warped_ref.width - packed.width) / 2;
  for (int c = 0; c < packed.channels; ++c)
    for (int y = 0; y < packed.height; ++y)
      for (int x = 0; x < packed.width; ++x)
        out.at(c, y0 + y, x0 + x) = packed.at(c, y, x);
  return out;
}

int64_t similarity_pair_count(int anchor_h, int anchor_w, int ref_h,
                              int ref_w) {
  return static_cast<int64_t>(anchor_h) * anchor_w * ref_h * ref_w;
}

RefAligner::RefAligner(nn::ParamStore& store, const std::string& name,
                       const MatchFeatureExtractor* extractor,
                       int out_channels, int r, Rng& rng)
    : extractor_(extractor), channels_(out_channels), r_(r) {
  // Values come from the space-to-depth packed reference, so each anchor-grid
  // cell keeps the full r-times sub-pixel detail in channels.
  value_head_ = nn::Conv2d(store, name + ".value", 3 * r * r, out_channels, 3,
                           1, 1, nn::Role::kInfer, nn::OptGroup::kMain, rng);
  paste_proj_ = nn::Conv2d(store, name + ".paste", 3 * r * r, out_channels, 1,
                           1, 0, nn::Role::kInfer, nn::OptGroup::kMain, rng);
}

IndexMap RefAligner::match(const ImagePlane& ref_img,
                           const ImagePlane& anchor_img) const {
  // Bring the reference to the anchor's content scale before embedding.
  ImagePlane ref_small = resize_bicubic(ref_img, 1.0 / r_);
  FeatureMap fr = extractor_->extract(ref_small);
  FeatureMap fa = extractor_->extract(anchor_img);
  return match_index_map(fr, fa);
}

ad::Var RefAligner::forward(nn::GraphCtx& g, const ImagePlane& ref_img,
                            const ImagePlane& anchor_img) const {
  const int h = anchor_img.height, w = anchor_img.width;
  if (ref_img.height % (4 * r_) != 0 || ref_img.width % (4 * r_) != 0)
    throw std::invalid_argument("RefAligner: reference dims not divisible");
  IndexMap idx = match(ref_img, anchor_img);

  // Value features on the packed reference grid (one cell per anchor-scale
  // pixel of reference content).
  ad::Var packed_ref = ad::pixel_unshuffle_op(
      ad::constant(align::image_chw(ref_img)), r_);
  ad::Var values = value_head_.forward(g, packed_ref);

  // The value grid is 4x the coarse match grid, so a coarse index expands to
  // a 4x4 block gather on the anchor grid.
  std::vector<int> lin(static_cast<size_t>(h) * w);
  const int vh = ref_img.height / r_, vw = ref_img.width / r_;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int iy = 4 * idx.at_y(y / 4, x / 4) + (y % 4);
      int ix = 4 * idx.at_x(y / 4, x / 4) + (x % 4);
      if (iy >= vh) iy = vh - 1;
      if (ix >= vw) ix = vw - 1;
      lin[static_cast<size_t>(y) * w + x] = iy * vw + ix;
    }
  ad::Var warped = ad::gather_plane(values, std::move(lin), h, w);

  // Paste source: an image of exactly the anchor's dims depicting the central
  // 1/r of the anchor FOV at r-times resolution. A reference covering more
  // than that is center-cropped first.
  ImagePlane paste_src = ref_img;
  if (ref_img.height != h) {
    double factor = static_cast<double>(ref_img.height) / h;
    paste_src = center_crop(ref_img, factor);
  }
  if (paste_src.height != h || paste_src.width != w)
    throw std::invalid_argument("RefAligner: reference dims incompatible");
  ad::Var packed = ad::pixel_unshuffle_op(
      ad::constant(align::image_chw(paste_src)), r_);
  ad::Var projected = paste_proj_.forward(g, packed);
  return ad::paste_center_op(warped, projected);
}

}  // namespace zsr::match
