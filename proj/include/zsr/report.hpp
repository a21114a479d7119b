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

#include <string>
#include <vector>

#include "zsr/image.hpp"

namespace zsr::report {

// Polyline chart of one or more series on a white canvas.
ImagePlane render_loss_curve(const std::vector<std::vector<double>>& series,
                             int width = 640, int height = 360);

// Vertical bars, one per labeled value; bar order follows the input.
ImagePlane render_bars(const std::vector<double>& values, int width = 640,
                       int height = 360);

// Side-by-side panels from equally sized crops; one row per sample, panels
// are drawn at identical coordinates within each cell.
ImagePlane render_montage(const std::vector<std::vector<ImagePlane>>& rows,
                          int pad = 4);

// Reads a train log CSV (step,loss,aux) written by the trainer.
std::vector<std::vector<double>> read_train_log(const std::string& path);

// Reads metric rows (id + psnr_full) from an evaluation CSV.
std::vector<std::pair<std::string, double>> read_eval_psnr(
    const std::string& path);

}  // namespace zsr::report
