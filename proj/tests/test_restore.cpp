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

#include "gradcheck.hpp"
#include "zsr/align_lr.hpp"
#include "zsr/sim.hpp"
#include "zsr/train.hpp"

using namespace zsr;
using namespace zsr::train;

namespace {

SystemConfig small_config(restore::RefMode mode = restore::RefMode::kTeleOnly) {
  SystemConfig cfg;
  cfg.net.width = 8;
  cfg.net.blocks = 4;
  cfg.net.encoder_width = 8;
  cfg.net.fusion_split = 2;
  cfg.net.ref_mode = mode;
  cfg.estimator_width = 8;
  cfg.match_channels = 8;
  cfg.aux_width = 8;
  cfg.loss.stages = {0};
  return cfg;
}

sim::TrainingPair make_pair(uint64_t seed, int scene_size = 256,
                            bool degraded = true) {
  ImagePlane scene = sim::synth_scene(seed, scene_size, scene_size);
  sim::CaptureParams p;
  if (!degraded) {
    p.blur_sigma = 0.0;
    p.parallax_amplitude = 0.0;
    p.noise_sigma = 0.0;
  }
  return sim::make_training_pair(sim::simulate_capture(scene, p, seed + 1));
}

}  // namespace

TEST_CASE("output has four times the input resolution") {
  SrSystem sys(small_config());
  for (int size : {256, 512}) {
    sim::TrainingPair pair = make_pair(70, size);
    ImagePlane out = sys.infer(pair.lr, pair.ref_t);
    CHECK(out.height == 4 * pair.lr.height);
    CHECK(out.width == 4 * pair.lr.width);
    for (double v : out.data) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("untrained network reproduces the interpolation base") {
  SrSystem sys(small_config());
  sim::TrainingPair pair = make_pair(71);
  ImagePlane out = sys.infer(pair.lr, pair.ref_t);
  ImagePlane base = resize_bicubic(pair.lr, 4.0);
  CHECK(out.data == base.data);
}

TEST_CASE("fresh modulation vectors are exactly the identity") {
  SystemConfig cfg = small_config();
  SrSystem sys(cfg);
  nn::GraphCtx g(&sys.params());
  Rng rng(72);
  Tensor fused({cfg.net.width, 16, 16});
  for (double& v : fused.v) v = rng.uniform();
  Tensor img({3, 16, 16}, 0.5);
  auto vectors =
      sys.core().modulation_vectors(g, ad::constant(fused), img, img);
  REQUIRE(static_cast<int>(vectors.size()) == cfg.net.blocks);
  for (const auto& m : vectors) {
    CHECK(m->val.numel() == cfg.net.width);  // one scale per channel
    for (double v : m->val.v) CHECK(v == 1.0);
  }
}

TEST_CASE("modulation reacts to reference color changes") {
  SystemConfig cfg = small_config();
  SrSystem sys(cfg);
  // Give the encoder head nonzero weights; it is zero-initialized.
  Rng rng(73);
  nn::Param& w = sys.params().at(sys.params().find("net.enc_fc2.w"));
  for (double& v : w.value.v) v = rng.uniform(-0.3, 0.3);

  Tensor fused({cfg.net.width, 16, 16});
  for (double& v : fused.v) v = rng.uniform();
  Tensor ref({3, 16, 16}, 0.5);
  Tensor center({3, 16, 16}, 0.5);

  nn::GraphCtx g1(&sys.params());
  auto base = sys.core().modulation_vectors(g1, ad::constant(fused), ref,
                                            center);
  Tensor ref_shift = ref;
  for (int i = 0; i < 16 * 16; ++i) ref_shift.v[static_cast<size_t>(i)] *= 1.1;
  nn::GraphCtx g2(&sys.params());
  auto shifted = sys.core().modulation_vectors(g2, ad::constant(fused),
                                               ref_shift, center);
  double delta = 0.0;
  for (size_t b = 0; b < base.size(); ++b)
    for (int i = 0; i < cfg.net.width; ++i)
      delta += std::fabs(base[b]->val.v[static_cast<size_t>(i)] -
                         shifted[b]->val.v[static_cast<size_t>(i)]);
  CHECK(delta > 1e-6);

  // Scales stay inside the bounded activation range.
  for (const auto& m : shifted)
    for (double v : m->val.v) {
      CHECK(v > 0.0);
      CHECK(v < 2.0);
    }
}

TEST_CASE("network is translation-consistent modulo content-driven paths") {
  // Zeroing the reference heads and the modulation encoder isolates the
  // convolutional spine, which must shift by r_t output pixels per input
  // pixel away from borders.
  SystemConfig cfg = small_config();
  SrSystem sys(cfg);
  for (const char* name :
       {"ref_t.value.w", "ref_t.value.b", "ref_t.paste.w", "ref_t.paste.b",
        "net.enc_fc2.w", "net.enc_fc2.b"}) {
    nn::Param& p = sys.params().at(sys.params().find(name));
    for (double& v : p.value.v) v = 0.0;
  }
  // A nonzero tail so the conv path actually contributes.
  Rng rng(74);
  nn::Param& tail = sys.params().at(sys.params().find("net.tail.w"));
  for (double& v : tail.value.v) v = rng.uniform(-0.05, 0.05);

  sim::TrainingPair pair = make_pair(75);
  const int d = 1;  // LR-pixel shift
  ImagePlane shifted_lr(pair.lr.height, pair.lr.width, 3);
  for (int y = 0; y < pair.lr.height; ++y)
    for (int x = 0; x < pair.lr.width; ++x)
      for (int c = 0; c < 3; ++c)
        shifted_lr.at(y, x, c) =
            pair.lr.at(y, std::min(x + d, pair.lr.width - 1), c);

  ImagePlane out = sys.infer(pair.lr, pair.ref_t);
  ImagePlane out_shifted = sys.infer(shifted_lr, pair.ref_t);

  int m = 40;  // HR-margin swallowing border and clamp effects
  double worst = 0.0;
  for (int y = m; y < out.height - m; ++y)
    for (int x = m; x < out.width - m - 4 * d; ++x)
      for (int c = 0; c < 3; ++c)
        worst = std::max(worst, std::fabs(out_shifted.at(y, x, c) -
                                          out.at(y, x + 4 * d, c)));
  CHECK(worst < 1e-9);
}

TEST_CASE("analytic gradients match finite differences on a small net") {
  SystemConfig cfg = small_config();
  cfg.net.blocks = 3;
  SrSystem sys(cfg);
  // Perturb the zero-initialized tails so gradients flow everywhere.
  Rng rng(76);
  for (const char* name : {"net.tail.w", "net.enc_fc2.w"}) {
    nn::Param& p = sys.params().at(sys.params().find(name));
    for (double& v : p.value.v) v = rng.uniform(-0.1, 0.1);
  }

  sim::TrainingPair pair = make_pair(77, 256);
  flow::OracleFlowProvider oracle(*pair.truth);
  auto outcome = sys.train_sample(pair, oracle, 11, 0, 0);

  // Check a handful of coordinates across parameter groups.
  const char* names[] = {"net.fuse_a.w", "net.rb1.c1.w", "net.tail.w",
                         "net.enc_fc2.w", "net.up1.w", "align.head.w",
                         "ref_t.value.w", "aux.conv0.w"};
  for (const char* name : names) {
    int id = sys.params().find(name);
    REQUIRE(id >= 0);
    nn::Param& p = sys.params().at(id);
    bool aux_group = p.group == nn::OptGroup::kGenerator;
    Tensor analytic =
        aux_group ? outcome.aux_ctx.grad(id) : outcome.main_ctx.grad(id);
    REQUIRE(!analytic.v.empty());

    Rng pick(static_cast<uint64_t>(id) + 100);
    for (int trial = 0; trial < 3; ++trial) {
      size_t idx = pick.uniform_int(p.value.v.size());
      double orig = p.value.v[idx];
      double eps = 1e-5;
      p.value.v[idx] = orig + eps;
      auto hi = sys.train_sample(pair, oracle, 11, 0, 0);
      p.value.v[idx] = orig - eps;
      auto lo = sys.train_sample(pair, oracle, 11, 0, 0);
      p.value.v[idx] = orig;
      double want = aux_group ? (hi.aux_loss - lo.aux_loss) / (2 * eps)
                              : (hi.main_loss - lo.main_loss) / (2 * eps);
      CHECK(testutil::rel_err(analytic.v[idx], want) < 1e-3);
    }
  }
}

TEST_CASE("progressive fusion variants all run and differ") {
  sim::TrainingPair pair = make_pair(78);
  std::vector<ImagePlane> outs;
  for (restore::Fusion f : {restore::Fusion::kWThenT, restore::Fusion::kTThenW,
                            restore::Fusion::kConcatAll}) {
    SystemConfig cfg = small_config(restore::RefMode::kBoth);
    cfg.net.fusion = f;
    SrSystem sys(cfg);
    // Untrained tails are zero; nudge so the paths differ measurably.
    Rng rng(79);
    nn::Param& tail = sys.params().at(sys.params().find("net.tail.w"));
    for (double& v : tail.value.v) v = rng.uniform(-0.05, 0.05);
    outs.push_back(sys.infer(pair.lr, pair.ref_t, pair.ref_w));
  }
  CHECK(outs[0].data != outs[1].data);
  CHECK(outs[0].data != outs[2].data);
}

TEST_CASE("wide reference zeroed keeps the output well-formed") {
  SystemConfig cfg = small_config(restore::RefMode::kBoth);
  SrSystem sys(cfg);
  Rng rng(80);
  nn::Param& tail = sys.params().at(sys.params().find("net.tail.w"));
  for (double& v : tail.value.v) v = rng.uniform(-0.05, 0.05);
  sim::TrainingPair pair = make_pair(81);
  ImagePlane zero_w(pair.ref_w->height, pair.ref_w->width, 3, 0.0);
  ImagePlane out = sys.infer(pair.lr, pair.ref_t, zero_w);
  for (double v : out.data) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("inference validates reference ratios") {
  SrSystem tele(small_config());
  sim::TrainingPair pair = make_pair(82);
  ImagePlane bad_ref(pair.lr.height / 2, pair.lr.width / 2, 3, 0.5);
  CHECK_THROWS(tele.infer(pair.lr, bad_ref));

  SrSystem both(small_config(restore::RefMode::kBoth));
  CHECK_THROWS(both.infer(pair.lr, pair.ref_t));  // missing wide reference
  ImagePlane bad_w(pair.lr.height * 3, pair.lr.width * 3, 3, 0.5);
  CHECK_THROWS(both.infer(pair.lr, pair.ref_t, bad_w));
}

TEST_CASE("inference works with poisoned train-only machinery") {
  SystemConfig cfg = small_config();
  SrSystem sys(cfg);
  poison_train_only(sys.params());
  sim::TrainingPair pair = make_pair(83);
  ImagePlane out = sys.infer(pair.lr, pair.ref_t);
  for (double v : out.data) CHECK(std::isfinite(v));
}
