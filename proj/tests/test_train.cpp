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
#include <filesystem>

#include "zsr/config.hpp"
#include "zsr/train.hpp"

using namespace zsr;
using namespace zsr::train;

namespace {

SystemConfig tiny_system() {
  SystemConfig cfg;
  cfg.net.width = 8;
  cfg.net.blocks = 4;
  cfg.net.encoder_width = 8;
  cfg.net.fusion_split = 2;
  cfg.estimator_width = 8;
  cfg.match_channels = 8;
  cfg.aux_width = 8;
  cfg.loss.stages = {0};
  return cfg;
}

std::vector<sim::TrainingPair> tiny_dataset(int scenes, uint64_t seed,
                                            bool degraded = true) {
  sim::DatasetSpec spec;
  spec.scenes = scenes;
  spec.scene_size = 256;
  if (!degraded) {
    spec.base.blur_sigma = 0.0;
    spec.base.parallax_amplitude = 0.0;
    spec.base.noise_sigma = 0.0;
    spec.gain_jitter = 0.0;
  }
  std::vector<sim::TrainingPair> pairs;
  for (const auto& cap : sim::make_dataset(spec, seed))
    pairs.push_back(sim::make_training_pair(cap));
  return pairs;
}

}  // namespace

TEST_CASE("same seed reproduces the loss trace and the evaluation report") {
  auto pairs = tiny_dataset(3, 5);
  TrainConfig tc;
  tc.steps = 6;
  tc.batch = 2;
  tc.threads = 2;
  tc.seed = 99;

  OracleFlowFactory flows;
  SrSystem sys1(tiny_system());
  TrainResult r1 = zsr::train::train(sys1, pairs, tc, flows);
  SrSystem sys2(tiny_system());
  TrainResult r2 = zsr::train::train(sys2, pairs, tc, flows);
  CHECK(r1.loss_trace == r2.loss_trace);
  CHECK(r1.aux_trace == r2.aux_trace);

  EvalReport e1 = evaluate(sys1, pairs, flows);
  EvalReport e2 = evaluate(sys2, pairs, flows);
  CHECK(e1.to_csv() == e2.to_csv());

  // Thread count does not affect the arithmetic.
  TrainConfig tc1 = tc;
  tc1.threads = 1;
  SrSystem sys3(tiny_system());
  TrainResult r3 = zsr::train::train(sys3, pairs, tc1, flows);
  CHECK(r3.loss_trace == r1.loss_trace);
}

TEST_CASE("checkpoint round trip is byte-stable and reproduces outputs") {
  namespace fs = std::filesystem;
  auto pairs = tiny_dataset(2, 6);
  SrSystem sys(tiny_system());
  TrainConfig tc;
  tc.steps = 4;
  tc.batch = 2;
  OracleFlowFactory flows;
  zsr::train::train(sys, pairs, tc, flows);

  fs::path p1 = fs::temp_directory_path() / "zsr_ckpt_a.bin";
  fs::path p2 = fs::temp_directory_path() / "zsr_ckpt_b.bin";
  save_checkpoint(p1.string(), sys.params(), "mode=dzsr\n");
  CHECK(checkpoint_config(p1.string()) == "mode=dzsr\n");

  SrSystem fresh(tiny_system());
  load_checkpoint_params(p1.string(), fresh.params());
  save_checkpoint(p2.string(), fresh.params(), "mode=dzsr\n");

  // One float32 round trip makes the serialized form a fixed point.
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)),
                 std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)),
                 std::istreambuf_iterator<char>());
  CHECK(b1 == b2);

  // Two systems loaded from the same checkpoint infer identically.
  SrSystem again(tiny_system());
  load_checkpoint_params(p1.string(), again.params());
  ImagePlane o1 = fresh.infer(pairs[0].lr, pairs[0].ref_t);
  ImagePlane o2 = again.infer(pairs[0].lr, pairs[0].ref_t);
  CHECK(o1.data == o2.data);
  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("train-time zeroed path reproduces inference bit for bit") {
  // Zero parallax: the flow-warped LR equals the LR exactly, so a train-mode
  // forward whose offset draws all landed at zero must match inference.
  auto pairs = tiny_dataset(1, 7, /*degraded=*/false);
  SrSystem sys(tiny_system());
  Rng rng(8);
  nn::Param& tail = sys.params().at(sys.params().find("net.tail.w"));
  for (double& v : tail.value.v) v = rng.uniform(-0.05, 0.05);

  ImagePlane aux(pairs[0].lr.height, pairs[0].lr.width, 3, 0.25);
  ImagePlane train_path = sys.forward_train_zeroed(pairs[0], aux);
  ImagePlane test_path = sys.infer(pairs[0].lr, pairs[0].ref_t);
  CHECK(train_path.data == test_path.data);
}

TEST_CASE("poisoned train-only stubs never disturb inference") {
  auto pairs = tiny_dataset(1, 9);
  SrSystem sys(tiny_system());
  poison_train_only(sys.params());
  PoisonedFlowFactory poisoned;
  // The factory would throw if inference consulted it; it never does.
  ImagePlane out = sys.infer(pairs[0].lr, pairs[0].ref_t);
  for (double v : out.data) CHECK(std::isfinite(v));
  (void)poisoned;
}

TEST_CASE("evaluation excludes samples whose alignment fails and says so") {
  class NoFlowFactory : public FlowProviderFactory {
   public:
    std::unique_ptr<flow::FlowProvider> for_pair(
        const sim::TrainingPair&) override {
      class Never : public flow::FlowProvider {
        std::optional<FlowField> estimate(const ImagePlane&,
                                          const ImagePlane&) override {
          return std::nullopt;
        }
      };
      return std::make_unique<Never>();
    }
  } never;
  auto pairs = tiny_dataset(2, 10);
  SrSystem sys(tiny_system());
  EvalReport report = evaluate(sys, pairs, never, /*bicubic_baseline=*/true);
  CHECK(report.excluded == 2);
  CHECK(report.rows.empty());
  std::string csv = report.to_csv();
  CHECK(csv.find("# excluded=2") != std::string::npos);
}

TEST_CASE("bicubic baseline on clean aligned data: corner tracks full") {
  auto pairs = tiny_dataset(3, 11, /*degraded=*/false);
  SrSystem sys(tiny_system());
  OracleFlowFactory flows;
  EvalReport report = evaluate(sys, pairs, flows, /*bicubic_baseline=*/true);
  REQUIRE(report.rows.size() == 3);
  for (const auto& row : report.rows) {
    CHECK(std::isfinite(row.psnr_full));
    CHECK(std::fabs(row.psnr_full - row.psnr_corner) < 0.5);
  }
}

TEST_CASE("corner region area excludes exactly the central window") {
  ImagePlane a(64, 64, 3, 0.0);
  ImagePlane b = a;
  // Perturb one pixel inside the central window and one outside.
  b.at(32, 32, 0) = 1.0;
  b.at(2, 2, 0) = 1.0;
  // Full-image MSE counts both; the corner metric only the outside pixel.
  double full_mse = mse(a, b);
  CHECK(full_mse == doctest::Approx(2.0 / (64 * 64 * 3)));
  double corner = psnr_outside_center(a, b, 4);
  double corner_count = (64.0 * 64.0 - 16.0 * 16.0) * 3.0;
  CHECK(corner == doctest::Approx(10.0 * std::log10(corner_count / 1.0)));
}

TEST_CASE("training rejects inconsistent datasets and non-finite losses") {
  auto pairs = tiny_dataset(1, 12);
  pairs[0].gt = ImagePlane(100, 100, 3, 0.5);  // breaks the 4x relation
  SrSystem sys(tiny_system());
  TrainConfig tc;
  tc.steps = 1;
  tc.batch = 1;
  OracleFlowFactory flows;
  CHECK_THROWS(zsr::train::train(sys, pairs, tc, flows));

  auto good = tiny_dataset(1, 13);
  SrSystem sick(tiny_system());
  nn::Param& w = sick.params().at(sick.params().find("net.fuse_a.w"));
  w.value.v[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(zsr::train::train(sick, good, tc, flows));
}

TEST_CASE("flow failures are counted and fall back to the unwarped input") {
  class Failing : public FlowProviderFactory {
   public:
    std::unique_ptr<flow::FlowProvider> for_pair(
        const sim::TrainingPair&) override {
      class Never : public flow::FlowProvider {
        std::optional<FlowField> estimate(const ImagePlane&,
                                          const ImagePlane&) override {
          return std::nullopt;
        }
      };
      return std::make_unique<Never>();
    }
  } failing;
  auto pairs = tiny_dataset(1, 14);
  SrSystem sys(tiny_system());
  TrainConfig tc;
  tc.steps = 2;
  tc.batch = 2;
  TrainResult r = zsr::train::train(sys, pairs, tc, failing);
  CHECK(r.flow_failures == 4);
}

TEST_CASE("pair cropping preserves the construction relations") {
  auto pairs = tiny_dataset(1, 15);
  sim::TrainingPair crop = crop_pair(pairs[0], 16, 77);
  CHECK(crop.lr.height == 16);
  CHECK(crop.gt.height == 64);
  CHECK(crop.ref_t.height == 16);
  CHECK(crop.ref_w->height == 32);
  // The telephoto reference is the centered crop of the GT patch.
  ImagePlane want = center_crop(crop.gt, 4.0);
  CHECK(crop.ref_t.data == want.data);
  CHECK(crop.truth.has_value());
  CHECK(crop.truth->lr_to_gt.height == 16);
  CHECK(crop.truth->gt_align.height == 64);

  // Determinism.
  sim::TrainingPair crop2 = crop_pair(pairs[0], 16, 77);
  CHECK(crop2.lr.data == crop.lr.data);
}

TEST_CASE("paper preset pins the published training configuration") {
  config::RunConfig rc;
  rc.apply_preset("paper");
  train::TrainConfig tc = rc.train_config();
  CHECK(tc.batch == 16);
  CHECK(tc.lr_patch == 48);
  CHECK(tc.step_size == doctest::Approx(1e-4));
  CHECK(tc.step_size_after == doctest::Approx(5e-5));
  CHECK(rc.integer("epochs") == 400);
  CHECK(rc.integer("decay_epoch") == 200);
  nn::Adam adam;
  CHECK(adam.beta1 == doctest::Approx(0.9));
  CHECK(adam.beta2 == doctest::Approx(0.999));

  // Desk preset keeps the criterion-scale values.
  config::RunConfig desk;
  CHECK(desk.integer("batch") == 8);
  CHECK(desk.integer("lr_patch") == 16);
  CHECK(desk.integer("steps") == 3000);
  CHECK(desk.num("lambda_pos") == doctest::Approx(100.0));
  CHECK(desk.num("sw_weight") == doctest::Approx(0.08));
  CHECK(desk.num("zero_prob") == doctest::Approx(0.3));
}

TEST_CASE("config echo reproduces the configuration") {
  config::RunConfig rc;
  rc.set("mode", "tzsr");
  rc.set("steps", "123");
  config::RunConfig back = config::RunConfig::from_echo(rc.echo());
  CHECK(back.str("mode") == "tzsr");
  CHECK(back.integer("steps") == 123);
  CHECK(back.echo() == rc.echo());
}

TEST_CASE("short training run decreases the loss") {
  auto pairs = tiny_dataset(3, 16);
  SrSystem sys(tiny_system());
  TrainConfig tc;
  tc.steps = 120;
  tc.batch = 4;
  tc.step_size = 2e-3;
  tc.decay_at = 1000;
  tc.threads = 2;
  OracleFlowFactory flows;
  TrainResult r = zsr::train::train(sys, pairs, tc, flows);
  double first = 0, last = 0;
  for (int i = 0; i < 20; ++i) {
    first += r.loss_trace[static_cast<size_t>(i)];
    last += r.loss_trace[r.loss_trace.size() - 20 + static_cast<size_t>(i)];
  }
  CHECK(last < first);
}
