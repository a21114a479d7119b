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

#include "zsr/image.hpp"
#include "zsr/nn.hpp"

namespace zsr::match {

// Best-match coordinates into a reference feature grid, one entry per anchor
// position, with the cosine similarity score at the match.
struct IndexMap {
  int height = 0, width = 0;          // anchor grid
  int ref_height = 0, ref_width = 0;  // reference grid the indices address
  std::vector<int> idx_y, idx_x;
  std::vector<double> score;

  int at_y(int y, int x) const { return idx_y[static_cast<size_t>(y) * width + x]; }
  int at_x(int y, int x) const { return idx_x[static_cast<size_t>(y) * width + x]; }
  double score_at(int y, int x) const {
    return score[static_cast<size_t>(y) * width + x];
  }
};

// Fixed-seed frozen convolutional embedder, shared by the reference and
// anchor branches. Three stages, stride total 4.
class MatchFeatureExtractor {
 public:
  MatchFeatureExtractor(nn::ParamStore& store, const std::string& name,
                        int channels, uint64_t seed);
  FeatureMap extract(const ImagePlane& img) const;
  int channels() const { return channels_; }
  int downsample() const { return 4; }

 private:
  const nn::ParamStore* store_;
  int channels_;
  nn::Conv2d c1_, c2_, c3_;
};

// Exhaustive argmax cosine similarity from every anchor position over every
// reference position; zero-norm vectors score 0, ties break to the smallest
// raster index.
IndexMap match_index_map(const FeatureMap& ref_feat,
                         const FeatureMap& anchor_feat);

// Pure gather: out(p) = ref_feat(idx(p)).
FeatureMap warp_ref(const FeatureMap& ref_feat, const IndexMap& idx);

// Replaces the centered window of `warped_ref` with the space-to-depth
// rearrangement of `ref_img` (already at the window's r-times resolution).
// Channel count is reconciled by the caller; this overload requires equal
// channel counts.
FeatureMap center_paste(const FeatureMap& warped_ref, const FeatureMap& ref,
                        int r);

// Number of cosine evaluations an exhaustive match performs.
int64_t similarity_pair_count(int anchor_h, int anchor_w, int ref_h, int ref_w);

// Trainable value head + paste projection around the frozen matcher. One
// instance per reference branch (telephoto r=4, wide-angle r=2).
class RefAligner {
 public:
  RefAligner(nn::ParamStore& store, const std::string& name,
             const MatchFeatureExtractor* extractor, int out_channels, int r,
             Rng& rng);

  // Full align pipeline on the anchor's grid: extract, match coarse, gather
  // value features, center-paste the rearranged reference.
  ad::Var forward(nn::GraphCtx& g, const ImagePlane& ref_img,
                  const ImagePlane& anchor_img) const;

  // Score map of the last-constructed index map is not retained; use this to
  // inspect matching quality in tests.
  IndexMap match(const ImagePlane& ref_img, const ImagePlane& anchor_img) const;

  int r() const { return r_; }

 private:
  const MatchFeatureExtractor* extractor_;
  int channels_;
  int r_;
  nn::Conv2d value_head_;  // 3 -> C on the reference image grid
  nn::Conv2d paste_proj_;  // 3*r*r -> C, 1x1
};

}  // namespace zsr::match
