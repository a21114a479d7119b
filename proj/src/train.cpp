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

#include "zsr/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace zsr::train {

std::unique_ptr<flow::FlowProvider> OracleFlowFactory::for_pair(
    const sim::TrainingPair& pair) {
  if (!pair.truth)
    throw std::invalid_argument("oracle flow requires simulator truth");
  return std::make_unique<flow::OracleFlowProvider>(*pair.truth);
}

SrSystem::SrSystem(const SystemConfig& cfg) : cfg_(cfg) {
  Rng init(derive_seed(cfg.init_seed, 0x1417));
  extractor_ = std::make_unique<match::MatchFeatureExtractor>(
      store_, "matchfe", cfg.match_channels, cfg.frozen_seed);
  pyramid_ = std::make_unique<loss::PerceptualPyramid>(store_, "phi",
                                                       cfg.frozen_seed + 1);
  align::DeformAlignConfig dcfg;
  dcfg.channels = cfg.net.width;
  dcfg.estimator_width = cfg.estimator_width;
  deform_ = std::make_unique<align::DeformAlign>(store_, "align", dcfg, init);
  align::AuxGeneratorConfig acfg;
  acfg.width = cfg.aux_width;
  acfg.r_t = cfg.r_t;
  aux_ = std::make_unique<align::AuxGenerator>(store_, acfg, init);
  ref_t_ = std::make_unique<match::RefAligner>(store_, "ref_t",
                                               extractor_.get(), cfg.net.width,
                                               cfg.r_t, init);
  ref_w_ = std::make_unique<match::RefAligner>(store_, "ref_w",
                                               extractor_.get(), cfg.net.width,
                                               cfg.r_w, init);
  core_ = std::make_unique<restore::RestorationCore>(store_, cfg.net, init);
}

ad::Var SrSystem::forward_core(nn::GraphCtx& g, const Tensor& lr_img,
                               const ImagePlane& lr_plane,
                               const ImagePlane& ref_t,
                               const std::optional<ImagePlane>& ref_w,
                               const std::optional<Tensor>& aux_img,
                               align::Phase phase,
                               const std::array<bool, 3>& zero_draws,
                               const ImagePlane& anchor) const {
  const int h = lr_plane.height, w = lr_plane.width;
  if (h % 16 != 0 || w % 16 != 0)
    throw std::invalid_argument("forward: input dims must be divisible by 16");
  if (ref_t.height != h || ref_t.width != w)
    throw std::invalid_argument("forward: reference/input ratio mismatch");

  ad::Var aligned =
      align::align_lr_features(g, *deform_, lr_img, aux_img, phase, zero_draws);

  restore::RestorationCore::Inputs in;
  in.aligned_lr = aligned;

  const restore::NetConfig& nc = cfg_.net;
  if (nc.ref_mode != restore::RefMode::kWideOnly)
    in.ref_t_feats = ref_t_->forward(g, ref_t, anchor);
  if (nc.ref_mode != restore::RefMode::kTeleOnly) {
    if (!ref_w)
      throw std::invalid_argument("forward: wide reference missing");
    if (ref_w->height != h && ref_w->height != cfg_.r_w * h)
      throw std::invalid_argument("forward: wide reference ratio mismatch");
    in.ref_w_feats = ref_w_->forward(g, *ref_w, anchor);
  }

  // Encoder conditioning: the reference image and the upsampled central area
  // of the network input, both on the input grid.
  ImagePlane enc_ref = ref_t;
  if (nc.ref_mode == restore::RefMode::kWideOnly) {
    enc_ref = *ref_w;
    if (enc_ref.height != h)
      enc_ref = resize_bicubic(enc_ref, static_cast<double>(h) / enc_ref.height);
  }
  ImagePlane center_up =
      resize_bicubic(center_crop(lr_plane, cfg_.r_t), cfg_.r_t);
  in.encoder_ref_img = align::image_chw(enc_ref);
  in.encoder_center_img = align::image_chw(center_up);
  in.base = align::image_chw(resize_bicubic(lr_plane, cfg_.r_t));
  return core_->forward(g, in);
}

SrSystem::SampleOutcome SrSystem::train_sample(const sim::TrainingPair& pair,
                                               flow::FlowProvider& fp,
                                               uint64_t run_seed, uint64_t step,
                                               int sample_index) const {
  SampleOutcome out;
  out.main_ctx = nn::GraphCtx(&store_);
  out.aux_ctx = nn::GraphCtx(&store_);

  // Stage 1: patch-based flow warping toward the GT geometry.
  ImagePlane warped = pair.lr;
  if (cfg_.align_arm != AlignArm::kNone) {
    align::WarpResult wr = align::patch_flow_align(pair.lr, pair.gt, fp);
    warped = std::move(wr.warped);
    out.flow_failed = wr.flow_failed;
  }
  Tensor warped_chw = align::image_chw(warped);
  Tensor gt_chw = align::image_chw(pair.gt);

  // Auxiliary generator pass with its own objective and graph.
  std::optional<Tensor> aux_img;
  ImagePlane aux_plane;
  if (cfg_.align_arm == AlignArm::kTwoStage) {
    ad::Var aux_out = aux_->forward(out.aux_ctx, gt_chw, warped_chw);
    ad::Var aux_loss =
        aux_->objective(out.aux_ctx, aux_out, warped_chw, cfg_.lambda_pos);
    ad::backward(aux_loss);
    out.aux_loss = aux_loss->val.v[0];
    aux_plane = clip01(align::chw_image(aux_out->val));
    aux_plane = align::inject_noise(
        aux_plane, cfg_.noise,
        derive_seed(run_seed, 0x9013e, step, static_cast<uint64_t>(sample_index)));
    aux_img = align::image_chw(aux_plane);
  }

  std::array<bool, 3> draws{true, true, true};
  if (cfg_.align_arm == AlignArm::kTwoStage)
    draws = align::draw_stage_zeros(
        cfg_.zero_prob,
        derive_seed(run_seed, 0xd4a3, step, static_cast<uint64_t>(sample_index)));

  align::Phase phase = align::Phase::kTrain;
  const ImagePlane& anchor =
      (cfg_.anchor == MatchAnchor::kAuxLr && cfg_.align_arm == AlignArm::kTwoStage)
          ? aux_plane
          : warped;

  std::optional<Tensor> aux_for_align =
      cfg_.align_arm == AlignArm::kTwoStage ? aux_img : std::nullopt;
  ad::Var yhat = forward_core(out.main_ctx, warped_chw, warped, pair.ref_t,
                              pair.ref_w, aux_for_align, phase, draws, anchor);

  Rng proj_rng(derive_seed(run_seed, 0x940a, step,
                           static_cast<uint64_t>(sample_index)));
  ad::Var loss = loss::total_loss(out.main_ctx, yhat, gt_chw, *pyramid_,
                                  cfg_.loss, proj_rng);
  ad::backward(loss);
  out.main_loss = loss->val.v[0];
  return out;
}

ImagePlane SrSystem::infer(const ImagePlane& u, const ImagePlane& t,
                           const std::optional<ImagePlane>& w) const {
  if (t.height != u.height || t.width != u.width)
    throw std::invalid_argument("infer: telephoto/ultra-wide ratio mismatch");
  if (cfg_.net.ref_mode != restore::RefMode::kTeleOnly && !w)
    throw std::invalid_argument("infer: wide-angle reference required");
  nn::GraphCtx g(&store_, /*training=*/false);
  std::array<bool, 3> zeros{true, true, true};
  ad::Var yhat = forward_core(g, align::image_chw(u), u, t, w, std::nullopt,
                              align::Phase::kTest, zeros, u);
  return clip01(align::chw_image(yhat->val));
}

ImagePlane SrSystem::forward_train_zeroed(const sim::TrainingPair& pair,
                                          const ImagePlane& aux_image) const {
  nn::GraphCtx g(&store_, /*training=*/false);
  std::array<bool, 3> zeros{true, true, true};
  Tensor lr_chw = align::image_chw(pair.lr);
  ad::Var yhat = forward_core(g, lr_chw, pair.lr, pair.ref_t, pair.ref_w,
                              align::image_chw(aux_image), align::Phase::kTrain,
                              zeros, pair.lr);
  return clip01(align::chw_image(yhat->val));
}

sim::TrainingPair crop_pair(const sim::TrainingPair& pair, int lr_patch,
                            uint64_t seed) {
  const int h = pair.lr.height, w = pair.lr.width;
  if (lr_patch >= h && lr_patch >= w) return pair;
  if (lr_patch % 4 != 0)
    throw std::invalid_argument("crop_pair: patch must be divisible by 4");
  Rng rng(derive_seed(seed, 0xc209));
  int y0 = static_cast<int>(rng.uniform_int(h - lr_patch + 1));
  int x0 = static_cast<int>(rng.uniform_int(w - lr_patch + 1));
  // Keep the matching lattice aligned.
  y0 &= ~3;
  x0 &= ~3;
  const int r = pair.gt.height / h;

  auto crop_img = [](const ImagePlane& img, int cy, int cx, int ch, int cw) {
    ImagePlane out(ch, cw, img.channels);
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x)
        for (int c = 0; c < img.channels; ++c)
          out.at(y, x, c) = img.at(cy + y, cx + x, c);
    return out;
  };
  sim::TrainingPair out;
  out.id = pair.id;
  out.lr = crop_img(pair.lr, y0, x0, lr_patch, lr_patch);
  out.gt = crop_img(pair.gt, r * y0, r * x0, r * lr_patch, r * lr_patch);
  out.ref_t = center_crop(out.gt, r);
  if (pair.ref_w) {
    int rw = pair.ref_w->height / h;
    out.ref_w = crop_img(*pair.ref_w, rw * y0, rw * x0, rw * lr_patch,
                         rw * lr_patch);
  }
  if (pair.truth) {
    sim::PairTruth t;
    t.params = pair.truth->params;
    t.lr_to_gt = FlowField(lr_patch, lr_patch);
    for (int y = 0; y < lr_patch; ++y)
      for (int x = 0; x < lr_patch; ++x) {
        t.lr_to_gt.dy_at(y, x) = pair.truth->lr_to_gt.dy_at(y0 + y, x0 + x);
        t.lr_to_gt.dx_at(y, x) = pair.truth->lr_to_gt.dx_at(y0 + y, x0 + x);
      }
    t.gt_align = FlowField(r * lr_patch, r * lr_patch);
    for (int y = 0; y < r * lr_patch; ++y)
      for (int x = 0; x < r * lr_patch; ++x) {
        t.gt_align.dy_at(y, x) =
            pair.truth->gt_align.dy_at(r * y0 + y, r * x0 + x);
        t.gt_align.dx_at(y, x) =
            pair.truth->gt_align.dx_at(r * y0 + y, r * x0 + x);
      }
    out.truth = std::move(t);
  }
  return out;
}

TrainResult train(SrSystem& sys, const std::vector<sim::TrainingPair>& data,
                  const TrainConfig& cfg, FlowProviderFactory& flows,
                  std::ostream* log) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  for (const auto& p : data) {
    if (p.gt.height != p.lr.height * sys.config().r_t ||
        p.gt.width != p.lr.width * sys.config().r_t)
      throw std::invalid_argument("train: gt dims must be r_t times lr dims");
  }

  nn::Adam adam_main, adam_gen;
  adam_main.lr = cfg.step_size;
  adam_gen.lr = cfg.step_size;

  TrainResult result;
  result.loss_trace.reserve(static_cast<size_t>(cfg.steps));

  const int threads = std::max(1, cfg.threads);
  for (int step = 0; step < cfg.steps; ++step) {
    double lr_now = step >= cfg.decay_at ? cfg.step_size_after : cfg.step_size;
    adam_main.lr = lr_now;
    adam_gen.lr = lr_now;

    // Assemble the batch deterministically.
    Rng batch_rng(derive_seed(cfg.seed, 0xba7c4, static_cast<uint64_t>(step)));
    std::vector<sim::TrainingPair> batch;
    batch.reserve(static_cast<size_t>(cfg.batch));
    for (int i = 0; i < cfg.batch; ++i) {
      const sim::TrainingPair& src =
          data[batch_rng.uniform_int(data.size())];
      sim::TrainingPair p =
          crop_pair(src, cfg.lr_patch,
                    derive_seed(cfg.seed, 0xc40b, step, static_cast<uint64_t>(i)));
      batch.push_back(sim::augment(
          p, derive_seed(cfg.seed, 0xa06, step, static_cast<uint64_t>(i))));
    }

    std::vector<SrSystem::SampleOutcome> outcomes(
        static_cast<size_t>(cfg.batch));
    auto worker = [&](int t) {
      for (int i = t; i < cfg.batch; i += threads) {
        auto provider = flows.for_pair(batch[static_cast<size_t>(i)]);
        outcomes[static_cast<size_t>(i)] = sys.train_sample(
            batch[static_cast<size_t>(i)], *provider, cfg.seed,
            static_cast<uint64_t>(step), i);
      }
    };
    if (threads == 1) {
      worker(0);
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
      for (auto& th : pool) th.join();
    }

    // Ordered reduction keeps results independent of thread count.
    nn::GradAccumulator main_grads(sys.params().size());
    nn::GradAccumulator gen_grads(sys.params().size());
    double main_loss = 0.0, aux_loss = 0.0;
    for (int i = 0; i < cfg.batch; ++i) {
      const auto& oc = outcomes[static_cast<size_t>(i)];
      main_loss += oc.main_loss;
      aux_loss += oc.aux_loss;
      if (oc.flow_failed) ++result.flow_failures;
      for (size_t id = 0; id < sys.params().size(); ++id) {
        Tensor g = oc.main_ctx.grad(static_cast<int>(id));
        if (!g.v.empty()) main_grads.add(static_cast<int>(id), g);
        Tensor ga = oc.aux_ctx.grad(static_cast<int>(id));
        if (!ga.v.empty()) gen_grads.add(static_cast<int>(id), ga);
      }
    }
    main_grads.scale(1.0 / cfg.batch);
    gen_grads.scale(1.0 / cfg.batch);
    main_loss /= cfg.batch;
    aux_loss /= cfg.batch;

    if (!std::isfinite(main_loss) || !std::isfinite(aux_loss))
      throw std::runtime_error("train: non-finite loss at step " +
                               std::to_string(step));

    // Generator first, then the main parameters.
    adam_gen.step(sys.params(), gen_grads, nn::OptGroup::kGenerator);
    adam_main.step(sys.params(), main_grads, nn::OptGroup::kMain);

    result.loss_trace.push_back(main_loss);
    result.aux_trace.push_back(aux_loss);
    if (log) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%d,%.8f,%.8f\n", step, main_loss,
                    aux_loss);
      (*log) << buf;
    }
  }
  return result;
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  std::istringstream cfg(config_echo);
  std::string line;
  while (std::getline(cfg, line)) os << "# " << line << "\n";
  os << "# excluded=" << excluded << "\n";
  os << "id,psnr_full,ssim_full,psnr_corner,ssim_corner,lpips_full,lpips_"
        "corner\n";
  char buf[160];
  auto row = [&](const EvalRow& r) {
    std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f,%.4f,%.4f,,\n", r.id.c_str(),
                  r.psnr_full, r.ssim_full, r.psnr_corner, r.ssim_corner);
    os << buf;
  };
  for (const auto& r : rows) row(r);
  row(mean);
  return os.str();
}

EvalReport evaluate(const SrSystem& sys,
                    const std::vector<sim::TrainingPair>& data,
                    FlowProviderFactory& flows, bool bicubic_baseline,
                    std::vector<ImagePlane>* outputs) {
  EvalReport report;
  double pf = 0, sf = 0, pc = 0, sc = 0;
  for (const auto& pair : data) {
    ImagePlane yhat =
        bicubic_baseline
            ? resize_bicubic(pair.lr, sys.config().r_t)
            : sys.infer(pair.lr, pair.ref_t,
                        sys.config().net.ref_mode == restore::RefMode::kTeleOnly
                            ? std::nullopt
                            : pair.ref_w);
    auto provider = flows.for_pair(pair);
    auto field = provider->estimate(yhat, pair.gt);
    if (!field) {
      ++report.excluded;
      continue;
    }
    ImagePlane aligned_gt = backward_warp(pair.gt, *field);
    EvalRow row;
    row.id = pair.id;
    row.psnr_full = psnr(yhat, aligned_gt);
    row.ssim_full = ssim(yhat, aligned_gt);
    row.psnr_corner = psnr_outside_center(yhat, aligned_gt, sys.config().r_t);
    row.ssim_corner = ssim_outside_center(yhat, aligned_gt, sys.config().r_t);
    pf += row.psnr_full;
    sf += row.ssim_full;
    pc += row.psnr_corner;
    sc += row.ssim_corner;
    report.rows.push_back(row);
    if (outputs) outputs->push_back(yhat);
  }
  size_t n = report.rows.size();
  if (n > 0) {
    report.mean.id = "mean";
    report.mean.psnr_full = pf / n;
    report.mean.ssim_full = sf / n;
    report.mean.psnr_corner = pc / n;
    report.mean.ssim_corner = sc / n;
  }
  return report;
}

}  // namespace zsr::train
