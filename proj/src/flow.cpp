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

#include "zsr/flow.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace zsr::flow {

std::optional<FlowField> OracleFlowProvider::estimate(const ImagePlane& target,
                                                      const ImagePlane&) {
  if (target.height == truth_.lr_to_gt.height &&
      target.width == truth_.lr_to_gt.width)
    return truth_.lr_to_gt;
  if (target.height == truth_.gt_align.height &&
      target.width == truth_.gt_align.width)
    return truth_.gt_align;
  return std::nullopt;
}

namespace {

ImagePlane to_gray(const ImagePlane& img) {
  ImagePlane g(img.height, img.width, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int c = 0; c < img.channels; ++c) acc += img.at(y, x, c);
      g.at(y, x, 0) = acc / img.channels;
    }
  return g;
}

// Removes per-image mean so brightness/color offsets do not bias matching.
void zero_mean(ImagePlane& img) {
  double mean = 0.0;
  for (double v : img.data) mean += v;
  mean /= static_cast<double>(img.data.size());
  for (double& v : img.data) v -= mean;
}

double block_sad(const ImagePlane& a, const ImagePlane& b, int ay, int ax,
                 int by, int bx, int radius) {
  double acc = 0.0;
  int count = 0;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      int y0 = std::clamp(ay + dy, 0, a.height - 1);
      int x0 = std::clamp(ax + dx, 0, a.width - 1);
      int y1 = std::clamp(by + dy, 0, b.height - 1);
      int x1 = std::clamp(bx + dx, 0, b.width - 1);
      double d = a.at(y0, x0, 0) - b.at(y1, x1, 0);
      acc += d * d;
      ++count;
    }
  return acc / count;
}

// Gradient magnitude of the (grayscale) target; texture-rich pixels carry
// reliable matches and anchor the smoothing.
std::vector<double> texture_weights(const ImagePlane& g) {
  std::vector<double> w(static_cast<size_t>(g.height) * g.width, 0.0);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      double gy = g.at(std::min(y + 1, g.height - 1), x, 0) -
                  g.at(std::max(y - 1, 0), x, 0);
      double gx = g.at(y, std::min(x + 1, g.width - 1), 0) -
                  g.at(y, std::max(x - 1, 0), 0);
      w[static_cast<size_t>(y) * g.width + x] = std::hypot(gy, gx) + 1e-4;
    }
  return w;
}

void smooth_field(FlowField& f, const std::vector<double>& weights,
                  int iterations) {
  for (int it = 0; it < iterations; ++it) {
    FlowField tmp = f;
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x) {
        double sy = 0.0, sx = 0.0, sw = 0.0;
        for (int dy = -2; dy <= 2; ++dy)
          for (int dx = -2; dx <= 2; ++dx) {
            int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= f.height || xx < 0 || xx >= f.width) continue;
            double w = weights[static_cast<size_t>(yy) * f.width + xx];
            sy += w * tmp.dy_at(yy, xx);
            sx += w * tmp.dx_at(yy, xx);
            sw += w;
          }
        f.dy_at(y, x) = sy / sw;
        f.dx_at(y, x) = sx / sw;
      }
  }
}

// Parabolic peak interpolation around the best integer offset.
double subpixel_refine(double c_minus, double c_zero, double c_plus) {
  double denom = c_minus - 2.0 * c_zero + c_plus;
  if (std::fabs(denom) < 1e-12) return 0.0;
  double d = 0.5 * (c_minus - c_plus) / denom;
  return std::clamp(d, -0.5, 0.5);
}

}  // namespace

std::optional<FlowField> BlockMatchFlowProvider::estimate(
    const ImagePlane& target, const ImagePlane& source) {
  if (target.height != source.height || target.width != source.width)
    return std::nullopt;
  const int levels = 3;
  const int radius = 2;  // 5x5 blocks
  const int search = 4;

  std::vector<ImagePlane> tgt_pyr, src_pyr;
  tgt_pyr.push_back(to_gray(target));
  src_pyr.push_back(to_gray(source));
  zero_mean(tgt_pyr[0]);
  zero_mean(src_pyr[0]);
  for (int l = 1; l < levels; ++l) {
    if (tgt_pyr.back().height < 8 || tgt_pyr.back().width < 8) break;
    tgt_pyr.push_back(resize_bicubic_unclipped(tgt_pyr.back(), 0.5));
    src_pyr.push_back(resize_bicubic_unclipped(src_pyr.back(), 0.5));
  }

  FlowField f(tgt_pyr.back().height, tgt_pyr.back().width);
  double final_cost = 0.0;
  for (int l = static_cast<int>(tgt_pyr.size()) - 1; l >= 0; --l) {
    const ImagePlane& tgt = tgt_pyr[static_cast<size_t>(l)];
    const ImagePlane& src = src_pyr[static_cast<size_t>(l)];
    FlowField out(tgt.height, tgt.width);
    double cost_sum = 0.0;
    for (int y = 0; y < tgt.height; ++y)
      for (int x = 0; x < tgt.width; ++x) {
        int cy = y + static_cast<int>(std::lround(f.dy_at(y, x)));
        int cx = x + static_cast<int>(std::lround(f.dx_at(y, x)));
        double best = 1e18;
        int best_dy = 0, best_dx = 0;
        for (int dy = -search; dy <= search; ++dy)
          for (int dx = -search; dx <= search; ++dx) {
            // Small displacement penalty keeps texture-free blocks at the
            // coarse-level prior instead of drifting to an arbitrary tie.
            double c = block_sad(tgt, src, y, x, cy + dy, cx + dx, radius) +
                       2e-4 * std::sqrt(static_cast<double>(dy * dy + dx * dx));
            if (c < best) {
              best = c;
              best_dy = dy;
              best_dx = dx;
            }
          }
        best = block_sad(tgt, src, y, x, cy + best_dy, cx + best_dx, radius);
        // Sub-pixel refinement along each axis.
        double cmy = block_sad(tgt, src, y, x, cy + best_dy - 1, cx + best_dx,
                               radius);
        double cpy = block_sad(tgt, src, y, x, cy + best_dy + 1, cx + best_dx,
                               radius);
        double cmx = block_sad(tgt, src, y, x, cy + best_dy, cx + best_dx - 1,
                               radius);
        double cpx = block_sad(tgt, src, y, x, cy + best_dy, cx + best_dx + 1,
                               radius);
        out.dy_at(y, x) = cy + best_dy + subpixel_refine(cmy, best, cpy) - y;
        out.dx_at(y, x) = cx + best_dx + subpixel_refine(cmx, best, cpx) - x;
        cost_sum += best;
      }
    smooth_field(out, texture_weights(tgt), 3);
    final_cost = cost_sum / (tgt.height * tgt.width);
    if (l > 0) {
      const ImagePlane& next = tgt_pyr[static_cast<size_t>(l - 1)];
      FlowField up(next.height, next.width);
      for (int y = 0; y < next.height; ++y)
        for (int x = 0; x < next.width; ++x) {
          int sy = std::min(out.height - 1, y / 2);
          int sx = std::min(out.width - 1, x / 2);
          up.dy_at(y, x) = out.dy_at(sy, sx) * 2.0;
          up.dx_at(y, x) = out.dx_at(sy, sx) * 2.0;
        }
      f = std::move(up);
    } else {
      f = std::move(out);
    }
  }
  if (final_cost > fail_threshold_) return std::nullopt;
  return f;
}

}  // namespace zsr::flow
