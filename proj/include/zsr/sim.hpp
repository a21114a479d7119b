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
#include <vector>

#include "zsr/image.hpp"

namespace zsr::sim {

struct CaptureParams {
  double blur_sigma = 2.0;          // Gaussian blur on the HR grid, pixels
  double parallax_amplitude = 3.0;  // max smooth displacement, LR pixels
  double color_gain[3] = {1.0, 1.0, 1.0};
  double color_bias[3] = {0.0, 0.0, 0.0};
  double noise_sigma = 10.0 / 255.0;
  int r_w = 2;
  int r_t = 4;
};

// Ground truth recorded by the simulator.
struct CaptureTruth {
  ImagePlane scene;    // latent HR scene (telephoto-grid resolution)
  FlowField parallax;  // forward field on the ultra-wide grid:
                       // ultra_wide(p) ~ clean_lr(p + parallax(p))
  CaptureParams params;
};

struct ZoomCapture {
  std::string id;
  ImagePlane ultra_wide;
  ImagePlane wide;
  ImagePlane tele;
  std::optional<CaptureTruth> truth;
};

// Alignment fields derived from simulator truth for one training pair.
struct PairTruth {
  FlowField lr_to_gt;   // LR grid; warping lr with it aligns lr to gt
  FlowField gt_align;   // GT grid; warping gt with it aligns gt to the
                        // upsampled-LR geometry
  CaptureParams params;
};

struct TrainingPair {
  std::string id;
  ImagePlane lr;     // center crop of ultra-wide
  ImagePlane ref_t;  // center crop of telephoto
  std::optional<ImagePlane> ref_w;  // center crop of wide-angle
  ImagePlane gt;     // whole telephoto
  std::optional<PairTruth> truth;
};

// Procedural HR scene: gradient base, random shapes, stripe/checker patches,
// glyph-like strokes. Deterministic per seed. Top-quartile mean of the
// |4-neighbor Laplacian| stays above 0.04.
ImagePlane synth_scene(uint64_t seed, int height, int width);

// Laplacian statistic used by the scene contract above.
double laplacian_top_quartile(const ImagePlane& img);

ZoomCapture simulate_capture(const ImagePlane& scene, const CaptureParams& p,
                             uint64_t seed);

TrainingPair make_training_pair(const ZoomCapture& c);

TrainingPair augment(const TrainingPair& pair, uint64_t seed);

// Flow-field counterparts of the dihedral augmentations; vectors transform
// with the grid.
FlowField flow_flip_h(const FlowField& f);
FlowField flow_flip_v(const FlowField& f);
FlowField flow_rot90(const FlowField& f);

// Scene directory layout: <root>/<scene_id>/{ultrawide,wide,tele}.png with an
// optional truth/ subdirectory (scene.png, parallax.zsflow, params.txt).
void write_capture_dir(const std::string& root, const ZoomCapture& c);

// Loads every complete scene directory; scenes with a missing image are
// skipped with a warning on stderr, unreadable images raise. All three images
// are resized to a common 16-divisible size so the r_w/r_t grid ratios hold
// exactly downstream.
std::vector<ZoomCapture> load_capture_dir(const std::string& root,
                                          int r_w = 2, int r_t = 4);

std::string params_to_text(const CaptureParams& p);
CaptureParams params_from_text(const std::string& text);

// Per-scene randomized capture parameters for the synthetic dataset presets.
struct DatasetSpec {
  int scenes = 20;
  int scene_size = 256;  // HR scene side; GT side is scene_size / r_t * r_t
  CaptureParams base;
  double gain_jitter = 0.1;  // per-channel gains in [1-j, 1+j]
};

std::vector<ZoomCapture> make_dataset(const DatasetSpec& spec, uint64_t seed);

}  // namespace zsr::sim
