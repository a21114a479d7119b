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

#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "zsr/align_lr.hpp"
#include "zsr/align_ref.hpp"
#include "zsr/flow.hpp"
#include "zsr/losses.hpp"
#include "zsr/nn.hpp"
#include "zsr/restore.hpp"
#include "zsr/sim.hpp"

namespace zsr::train {

enum class AlignArm { kTwoStage, kFlowOnly, kNone };
enum class MatchAnchor { kWarpedLr, kAuxLr };

struct SystemConfig {
  restore::NetConfig net;
  loss::LossConfig loss;
  align::NoiseSpec noise;
  AlignArm align_arm = AlignArm::kTwoStage;
  MatchAnchor anchor = MatchAnchor::kWarpedLr;
  double zero_prob = 0.3;
  double lambda_pos = 100.0;
  int estimator_width = 16;
  int match_channels = 16;
  int aux_width = 16;
  uint64_t frozen_seed = 77;
  uint64_t init_seed = 1;
  int r_w = 2;
  int r_t = 4;
};

// Hands out a flow provider appropriate for a given pair (oracle providers
// carry per-pair truth).
class FlowProviderFactory {
 public:
  virtual ~FlowProviderFactory() = default;
  virtual std::unique_ptr<flow::FlowProvider> for_pair(
      const sim::TrainingPair& pair) = 0;
};

class OracleFlowFactory : public FlowProviderFactory {
 public:
  std::unique_ptr<flow::FlowProvider> for_pair(
      const sim::TrainingPair& pair) override;
};

class BlockMatchFlowFactory : public FlowProviderFactory {
 public:
  std::unique_ptr<flow::FlowProvider> for_pair(const sim::TrainingPair&) override {
    return std::make_unique<flow::BlockMatchFlowProvider>();
  }
};

class PoisonedFlowFactory : public FlowProviderFactory {
 public:
  std::unique_ptr<flow::FlowProvider> for_pair(const sim::TrainingPair&) override {
    return std::make_unique<flow::PoisonedFlowProvider>();
  }
};

// The complete system: alignment stages, reference aligners, restoration
// core, auxiliary generator, frozen extractors, and their parameters.
class SrSystem {
 public:
  explicit SrSystem(const SystemConfig& cfg);

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const SystemConfig& config() const { return cfg_; }

  // Per-sample training pass. Produces the main and generator losses and the
  // gradients of both graphs.
  struct SampleOutcome {
    double main_loss = 0.0;
    double aux_loss = 0.0;
    bool flow_failed = false;
    nn::GraphCtx main_ctx;
    nn::GraphCtx aux_ctx;
  };
  SampleOutcome train_sample(const sim::TrainingPair& pair,
                             flow::FlowProvider& fp, uint64_t run_seed,
                             uint64_t step, int sample_index) const;

  // Inference with every train-only path detached.
  ImagePlane infer(const ImagePlane& u, const ImagePlane& t,
                   const std::optional<ImagePlane>& w = std::nullopt) const;

  // Training-style forward with forced zero offset draws; used to check the
  // train/test path equivalence.
  ImagePlane forward_train_zeroed(const sim::TrainingPair& pair,
                                  const ImagePlane& aux_image) const;

  align::DeformAlign& deform_align() { return *deform_; }
  align::AuxGenerator& aux_generator() { return *aux_; }
  restore::RestorationCore& core() { return *core_; }
  match::RefAligner& tele_aligner() { return *ref_t_; }
  match::RefAligner& wide_aligner() { return *ref_w_; }
  const loss::PerceptualPyramid& pyramid() const { return *pyramid_; }
  const match::MatchFeatureExtractor& extractor() const { return *extractor_; }

 private:
  struct ForwardPieces {
    ad::Var yhat;
  };
  ad::Var forward_core(nn::GraphCtx& g, const Tensor& lr_img,
                       const ImagePlane& lr_plane, const ImagePlane& ref_t,
                       const std::optional<ImagePlane>& ref_w,
                       const std::optional<Tensor>& aux_img,
                       align::Phase phase,
                       const std::array<bool, 3>& zero_draws,
                       const ImagePlane& anchor) const;

  SystemConfig cfg_;
  nn::ParamStore store_;
  std::unique_ptr<match::MatchFeatureExtractor> extractor_;
  std::unique_ptr<align::DeformAlign> deform_;
  std::unique_ptr<align::AuxGenerator> aux_;
  std::unique_ptr<match::RefAligner> ref_t_;
  std::unique_ptr<match::RefAligner> ref_w_;
  std::unique_ptr<restore::RestorationCore> core_;
  std::unique_ptr<loss::PerceptualPyramid> pyramid_;
};

struct TrainConfig {
  int steps = 3000;
  int batch = 8;
  int lr_patch = 16;
  double step_size = 1e-3;
  double step_size_after = 5e-4;
  int decay_at = 1500;
  int threads = 2;
  uint64_t seed = 7;
};

struct TrainResult {
  std::vector<double> loss_trace;  // mean main loss per step
  std::vector<double> aux_trace;   // mean generator loss per step
  int flow_failures = 0;
};

// Random patch of a pair preserving the pair-construction relations: the
// telephoto reference is the centered crop of the GT patch, the wide-angle
// reference the centered crop of the corresponding wide patch.
sim::TrainingPair crop_pair(const sim::TrainingPair& pair, int lr_patch,
                            uint64_t seed);

TrainResult train(SrSystem& sys, const std::vector<sim::TrainingPair>& data,
                  const TrainConfig& cfg, FlowProviderFactory& flows,
                  std::ostream* log = nullptr);

struct EvalRow {
  std::string id;
  double psnr_full = 0.0, ssim_full = 0.0;
  double psnr_corner = 0.0, ssim_corner = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  EvalRow mean;
  int excluded = 0;
  std::string config_echo;
  std::string to_csv() const;
};

// Full/corner evaluation: infer on the pair's (lr, refs), align the GT onto
// the output with the provider, score PSNR/SSIM on the full image and outside
// the central 1/r_t window. With `bicubic_baseline` the model is replaced by
// plain bicubic upsampling.
EvalReport evaluate(const SrSystem& sys,
                    const std::vector<sim::TrainingPair>& data,
                    FlowProviderFactory& flows, bool bicubic_baseline = false,
                    std::vector<ImagePlane>* outputs = nullptr);

// --- checkpoints ---------------------------------------------------------

// Format: "ZSRCKPT2", u32 version, config echo, named float32-LE blobs with
// role/group tags marking the train-only (detachable) groups.
void save_checkpoint(const std::string& path, const nn::ParamStore& store,
                     const std::string& config_echo);
std::string checkpoint_config(const std::string& path);
void load_checkpoint_params(const std::string& path, nn::ParamStore& store);
// Fills every train-only parameter with NaN; detachment harness helper.
void poison_train_only(nn::ParamStore& store);

}  // namespace zsr::train
