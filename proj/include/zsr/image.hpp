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

namespace zsr {

// H x W x C raster with intensities in [0, 1]. Row-major (y, x, c).
struct ImagePlane {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> data;

  ImagePlane() = default;
  ImagePlane(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        data(static_cast<size_t>(h) * w * c, fill) {}

  double& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  size_t size() const { return data.size(); }
  bool same_shape(const ImagePlane& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }
};

// C x H x W activation tensor. `scale` records the resolution factor of the
// grid relative to the LR working grid.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  int scale = 1;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w, int s = 1)
      : channels(c), height(h), width(w), scale(s),
        data(static_cast<size_t>(c) * h * w, 0.0) {}

  double& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
};

// Per-pixel displacement map. backward_warp(img, flow) samples
// img(y + dy(y,x), x + dx(y,x)).
struct FlowField {
  int height = 0;
  int width = 0;
  std::vector<double> dy;
  std::vector<double> dx;

  FlowField() = default;
  FlowField(int h, int w)
      : height(h), width(w), dy(static_cast<size_t>(h) * w, 0.0),
        dx(static_cast<size_t>(h) * w, 0.0) {}

  double& dy_at(int y, int x) { return dy[static_cast<size_t>(y) * width + x]; }
  double& dx_at(int y, int x) { return dx[static_cast<size_t>(y) * width + x]; }
  double dy_at(int y, int x) const {
    return dy[static_cast<size_t>(y) * width + x];
  }
  double dx_at(int y, int x) const {
    return dx[static_cast<size_t>(y) * width + x];
  }
};

// Centered window of size floor(H/r) x floor(W/r); the window is biased
// up-left when the flooring remainder is odd.
ImagePlane center_crop(const ImagePlane& img, double r);
FeatureMap center_crop(const FeatureMap& f, double r);

// Bicubic resampling (Keys kernel, a = -0.5), center-aligned grids, border
// clamp. Output values are clipped to [0, 1].
ImagePlane resize_bicubic(const ImagePlane& img, double scale);

// Same resampler without the [0,1] clip, for signal-processing use.
ImagePlane resize_bicubic_unclipped(const ImagePlane& img, double scale);

// Space-to-depth: (C, H, W) -> (C*r^2, H/r, W/r). Within a block, channels
// are ordered in raster order, fastest along x.
FeatureMap pixel_unshuffle(const FeatureMap& f, int r);

// Depth-to-space, exact inverse of pixel_unshuffle.
FeatureMap pixel_shuffle(const FeatureMap& f, int r);

// out(p) = img(p + flow(p)), bilinear sampling, clamp-to-edge border policy.
ImagePlane backward_warp(const ImagePlane& img, const FlowField& flow);

// 10*log10(1/MSE) in dB over [0,1] data; +infinity when the images coincide.
double psnr(const ImagePlane& a, const ImagePlane& b);

// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), k1=0.01, k2=0.03,
// averaged over channels.
double ssim(const ImagePlane& a, const ImagePlane& b);

double mse(const ImagePlane& a, const ImagePlane& b);
double rmse(const ImagePlane& a, const ImagePlane& b);

// PSNR/SSIM restricted to the area outside the centered (H/r) x (W/r) window.
double psnr_outside_center(const ImagePlane& a, const ImagePlane& b, int r);
double ssim_outside_center(const ImagePlane& a, const ImagePlane& b, int r);

ImagePlane clip01(ImagePlane img);
ImagePlane gaussian_blur(const ImagePlane& img, double sigma);
ImagePlane flip_horizontal(const ImagePlane& img);
ImagePlane flip_vertical(const ImagePlane& img);
ImagePlane rotate90(const ImagePlane& img);  // counter-clockwise

// Fixed-point inversion of a displacement field: returns G with
// backward_warp(backward_warp(img, F), G) ~= img for smooth F.
FlowField invert_flow(const FlowField& f, int iterations = 8);

FeatureMap image_to_features(const ImagePlane& img, int scale = 1);
ImagePlane features_to_image(const FeatureMap& f);

// 8-bit RGB PNG I/O; values map linearly between [0,1] and [0,255].
ImagePlane read_png(const std::string& path);
void write_png(const std::string& path, const ImagePlane& img);

// Raw flow dump: "ZSFLOW01", then H and W as u32 LE, then the dx plane and
// the dy plane as 32-bit LE floats.
FlowField read_flow(const std::string& path);
void write_flow(const std::string& path, const FlowField& flow);

// In-memory JPEG round trip at the given quality (4:4:4 sampling).
ImagePlane jpeg_roundtrip(const ImagePlane& img, int quality);

}  // namespace zsr
