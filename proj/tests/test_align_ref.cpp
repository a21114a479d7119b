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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "zsr/align_lr.hpp"
#include "zsr/align_ref.hpp"
#include "zsr/rng.hpp"
#include "zsr/sim.hpp"

using namespace zsr;
using namespace zsr::match;

namespace {

FeatureMap random_features(int c, int h, int w, uint64_t seed) {
  Rng rng(seed);
  FeatureMap f(c, h, w);
  for (double& v : f.data) v = rng.uniform(-1.0, 1.0);
  return f;
}

// Exhaustive double-loop oracle, kept deliberately brute force.
IndexMap brute_force_match(const FeatureMap& ref, const FeatureMap& anchor) {
  IndexMap out;
  out.height = anchor.height;
  out.width = anchor.width;
  out.ref_height = ref.height;
  out.ref_width = ref.width;
  size_t n = static_cast<size_t>(anchor.height) * anchor.width;
  out.idx_y.assign(n, 0);
  out.idx_x.assign(n, 0);
  out.score.assign(n, 0.0);
  for (int ay = 0; ay < anchor.height; ++ay)
    for (int ax = 0; ax < anchor.width; ++ax) {
      double best = -2.0;
      int by = 0, bx = 0;
      for (int ry = 0; ry < ref.height; ++ry)
        for (int rx = 0; rx < ref.width; ++rx) {
          double dot = 0, na = 0, nr = 0;
          for (int c = 0; c < ref.channels; ++c) {
            dot += anchor.at(c, ay, ax) * ref.at(c, ry, rx);
            na += anchor.at(c, ay, ax) * anchor.at(c, ay, ax);
            nr += ref.at(c, ry, rx) * ref.at(c, ry, rx);
          }
          double sim = (na > 0 && nr > 0) ? dot / std::sqrt(na * nr) : 0.0;
          if (sim > best) {
            best = sim;
            by = ry;
            bx = rx;
          }
        }
      size_t i = static_cast<size_t>(ay) * anchor.width + ax;
      out.idx_y[i] = by;
      out.idx_x[i] = bx;
      out.score[i] = best;
    }
  return out;
}

}  // namespace

TEST_CASE("identical features give the identity index map") {
  FeatureMap f = random_features(4, 3, 3, 1);
  IndexMap idx = match_index_map(f, f);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      CHECK(idx.at_y(y, x) == y);
      CHECK(idx.at_x(y, x) == x);
      CHECK(idx.score_at(y, x) == doctest::Approx(1.0));
    }
}

TEST_CASE("hand-built 2x2 grids match the brute-force oracle") {
  FeatureMap ref(2, 2, 2), anchor(2, 2, 2);
  // Four reference vectors pointing in distinct directions.
  double refs[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0.7, 0.7}};
  double anchors[4][2] = {{0.9, 0.1}, {0.1, -0.9}, {-2, 0.1}, {1, 1}};
  for (int i = 0; i < 4; ++i)
    for (int c = 0; c < 2; ++c) {
      ref.at(c, i / 2, i % 2) = refs[i][c];
      anchor.at(c, i / 2, i % 2) = anchors[i][c];
    }
  IndexMap got = match_index_map(ref, anchor);
  IndexMap want = brute_force_match(ref, anchor);
  CHECK(got.idx_y == want.idx_y);
  CHECK(got.idx_x == want.idx_x);
  // Anchor (1,1) = (1,1) direction matches reference (0.7,0.7).
  CHECK(got.at_y(1, 1) == 1);
  CHECK(got.at_x(1, 1) == 1);
}

TEST_CASE("match equals brute force on random grids") {
  for (uint64_t seed = 0; seed < 25; ++seed) {
    FeatureMap ref = random_features(3, 4, 4, 2 * seed);
    FeatureMap anchor = random_features(3, 4, 4, 2 * seed + 1);
    IndexMap got = match_index_map(ref, anchor);
    IndexMap want = brute_force_match(ref, anchor);
    CHECK(got.idx_y == want.idx_y);
    CHECK(got.idx_x == want.idx_x);
    for (size_t i = 0; i < got.score.size(); ++i)
      CHECK(got.score[i] == doctest::Approx(want.score[i]).epsilon(1e-12));
  }
}

TEST_CASE("index map is invariant to positive per-vector scaling") {
  FeatureMap ref = random_features(4, 4, 4, 9);
  FeatureMap anchor = random_features(4, 4, 4, 10);
  IndexMap base = match_index_map(ref, anchor);

  FeatureMap scaled = ref;
  Rng rng(11);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      double s = rng.uniform(0.2, 5.0);
      for (int c = 0; c < 4; ++c) scaled.at(c, y, x) *= s;
    }
  IndexMap after = match_index_map(scaled, anchor);
  CHECK(after.idx_y == base.idx_y);
  CHECK(after.idx_x == base.idx_x);

  FeatureMap uniform = ref;
  for (double& v : uniform.data) v *= 5.0;
  IndexMap five = match_index_map(uniform, anchor);
  CHECK(five.idx_y == base.idx_y);
  CHECK(five.idx_x == base.idx_x);
}

TEST_CASE("zero-norm vectors score zero and ties pick the first index") {
  FeatureMap ref(2, 2, 2);  // all zero
  FeatureMap anchor = random_features(2, 2, 2, 12);
  IndexMap idx = match_index_map(ref, anchor);
  for (size_t i = 0; i < idx.score.size(); ++i) {
    CHECK(idx.score[i] == 0.0);
    CHECK(idx.idx_y[i] == 0);
    CHECK(idx.idx_x[i] == 0);
  }
  CHECK_THROWS(match_index_map(FeatureMap(), anchor));
}

TEST_CASE("warp_ref gathers exactly") {
  FeatureMap ref = random_features(3, 3, 3, 13);
  IndexMap ident;
  ident.height = ident.width = 3;
  ident.ref_height = ident.ref_width = 3;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      ident.idx_y.push_back(y);
      ident.idx_x.push_back(x);
      ident.score.push_back(1.0);
    }
  FeatureMap same = warp_ref(ref, ident);
  CHECK(same.data == ref.data);

  IndexMap corner = ident;
  std::fill(corner.idx_y.begin(), corner.idx_y.end(), 0);
  std::fill(corner.idx_x.begin(), corner.idx_x.end(), 0);
  FeatureMap c = warp_ref(ref, corner);
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) CHECK(c.at(ch, y, x) == ref.at(ch, 0, 0));

  // Random valid map equals a hand gather, and output vectors always exist in
  // the input (value multiset membership).
  Rng rng(14);
  IndexMap rnd = ident;
  for (size_t i = 0; i < rnd.idx_y.size(); ++i) {
    rnd.idx_y[i] = static_cast<int>(rng.uniform_int(3));
    rnd.idx_x[i] = static_cast<int>(rng.uniform_int(3));
  }
  FeatureMap g = warp_ref(ref, rnd);
  std::set<std::vector<double>> input_vectors;
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      std::vector<double> v;
      for (int ch = 0; ch < 3; ++ch) v.push_back(ref.at(ch, y, x));
      input_vectors.insert(v);
    }
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) {
      std::vector<double> v;
      for (int ch = 0; ch < 3; ++ch) v.push_back(g.at(ch, y, x));
      CHECK(input_vectors.count(v) == 1);
      size_t i = static_cast<size_t>(y) * 3 + x;
      for (int ch = 0; ch < 3; ++ch)
        CHECK(g.at(ch, y, x) == ref.at(ch, rnd.idx_y[i], rnd.idx_x[i]));
    }
}

TEST_CASE("center paste replaces exactly the central window") {
  // 16x16 anchor grid, r=4: the pasted window is the central 4x4.
  FeatureMap warped = random_features(48, 16, 16, 15);
  FeatureMap ref = random_features(3, 16, 16, 16);
  FeatureMap out = center_paste(warped, ref, 4);
  FeatureMap packed = pixel_unshuffle(ref, 4);
  REQUIRE(packed.height == 4);
  for (int c = 0; c < 48; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        bool inside = y >= 6 && y < 10 && x >= 6 && x < 10;
        if (inside)
          CHECK(out.at(c, y, x) == packed.at(c, y - 6, x - 6));
        else
          CHECK(out.at(c, y, x) == warped.at(c, y, x));
      }

  // Idempotent for fixed inputs.
  FeatureMap again = center_paste(out, ref, 4);
  CHECK(again.data == out.data);

  CHECK_THROWS(center_paste(random_features(48, 2, 2, 17), ref, 4));
}

TEST_CASE("similarity work shrinks 256-fold at quarter resolution") {
  int64_t full = similarity_pair_count(64, 64, 64, 64);
  int64_t coarse = similarity_pair_count(16, 16, 16, 16);
  CHECK(full == 256 * coarse);
}

TEST_CASE("aligner finds correspondences on clean synthetic content") {
  nn::ParamStore store;
  MatchFeatureExtractor fe(store, "fe", 16, 99);
  Rng rng(18);
  RefAligner aligner(store, "ra", &fe, 8, 4, rng);

  // Anchor: a clean downscaled scene; reference: its exact center crop at 4x
  // resolution (the scene itself restricted to the central quarter).
  ImagePlane scene = sim::synth_scene(60, 256, 256);
  ImagePlane anchor = resize_bicubic(scene, 0.25);  // 64x64
  ImagePlane ref = center_crop(scene, 4.0);         // 64x64, central quarter

  IndexMap idx = aligner.match(ref, anchor);
  // Anchor coarse positions inside the central quarter should find their
  // counterpart content with high similarity. The outermost ring of the
  // reference loses half its context to the patch boundary, so the strict
  // bound applies to the context-clean interior cells.
  double min_inside = 1.0;
  for (int y = 7; y < 10; ++y)
    for (int x = 7; x < 10; ++x)
      min_inside = std::min(min_inside, idx.score_at(y, x));
  CHECK(min_inside > 0.9);
  double mean_ring = 0.0;
  for (int y = 6; y < 10; ++y)
    for (int x = 6; x < 10; ++x) mean_ring += idx.score_at(y, x);
  CHECK(mean_ring / 16.0 > 0.5);

  nn::GraphCtx g(&store);
  ad::Var feats = aligner.forward(g, ref, anchor);
  CHECK(feats->val.dim(0) == 8);
  CHECK(feats->val.dim(1) == 64);
  for (double v : feats->val.v) CHECK(std::isfinite(v));
}

TEST_CASE("pure-noise reference still yields well-formed features") {
  nn::ParamStore store;
  MatchFeatureExtractor fe(store, "fe", 16, 99);
  Rng rng(19);
  RefAligner aligner(store, "ra", &fe, 8, 4, rng);

  ImagePlane anchor = resize_bicubic(sim::synth_scene(61, 256, 256), 0.25);
  Rng noise(20);
  ImagePlane ref(64, 64, 3);
  for (double& v : ref.data) v = noise.uniform();

  IndexMap idx = aligner.match(ref, anchor);
  double mean_score = 0.0;
  for (double s : idx.score) mean_score += s;
  mean_score /= static_cast<double>(idx.score.size());
  CHECK(mean_score < 0.9);

  nn::GraphCtx g(&store);
  ad::Var feats = aligner.forward(g, ref, anchor);
  for (double v : feats->val.v) CHECK(std::isfinite(v));
}

TEST_CASE("wide-style reference at twice the anchor size") {
  nn::ParamStore store;
  MatchFeatureExtractor fe(store, "fe", 16, 99);
  Rng rng(21);
  RefAligner aligner(store, "ra", &fe, 8, 2, rng);

  ImagePlane scene = sim::synth_scene(62, 256, 256);
  ImagePlane anchor = resize_bicubic(scene, 0.25);  // 64
  ImagePlane ref = resize_bicubic(scene, 0.5);      // 128 = 2x anchor

  nn::GraphCtx g(&store);
  ad::Var feats = aligner.forward(g, ref, anchor);
  CHECK(feats->val.dim(1) == 64);
  CHECK(feats->val.dim(2) == 64);
  for (double v : feats->val.v) CHECK(std::isfinite(v));
}

TEST_CASE("extractor is deterministic and downsamples by four") {
  nn::ParamStore s1, s2;
  MatchFeatureExtractor a(s1, "fe", 16, 1234);
  MatchFeatureExtractor b(s2, "fe", 16, 1234);
  ImagePlane img = resize_bicubic(sim::synth_scene(63, 128, 128), 0.5);
  FeatureMap fa = a.extract(img);
  FeatureMap fb = b.extract(img);
  CHECK(fa.data == fb.data);
  CHECK(fa.height == img.height / 4);
  CHECK(fa.channels == 16);
}
