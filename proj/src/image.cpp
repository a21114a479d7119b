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

#include "zsr/image.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace zsr {

namespace {

int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Keys bicubic kernel with a = -0.5.
double cubic_kernel(double t) {
  const double a = -0.5;
  double x = std::fabs(t);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

}  // namespace

ImagePlane center_crop(const ImagePlane& img, double r) {
  if (r < 1.0) throw std::invalid_argument("center_crop: r must be >= 1");
  int oh = static_cast<int>(std::floor(img.height / r));
  int ow = static_cast<int>(std::floor(img.width / r));
  if (oh < 1 || ow < 1) throw std::invalid_argument("center_crop: empty result");
  int y0 = (img.height - oh) / 2;
  int x0 = (img.width - ow) / 2;
  ImagePlane out(oh, ow, img.channels);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) = img.at(y0 + y, x0 + x, c);
  return out;
}

FeatureMap center_crop(const FeatureMap& f, double r) {
  if (r < 1.0) throw std::invalid_argument("center_crop: r must be >= 1");
  int oh = static_cast<int>(std::floor(f.height / r));
  int ow = static_cast<int>(std::floor(f.width / r));
  if (oh < 1 || ow < 1) throw std::invalid_argument("center_crop: empty result");
  int y0 = (f.height - oh) / 2;
  int x0 = (f.width - ow) / 2;
  FeatureMap out(f.channels, oh, ow, f.scale);
  for (int c = 0; c < f.channels; ++c)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x)
        out.at(c, y, x) = f.at(c, y0 + y, x0 + x);
  return out;
}

namespace {

ImagePlane resize_bicubic_impl(const ImagePlane& img, double scale, bool clip) {
  if (!(scale > 0.0))
    throw std::invalid_argument("resize_bicubic: scale must be positive");
  int oh = static_cast<int>(std::lround(img.height * scale));
  int ow = static_cast<int>(std::lround(img.width * scale));
  if (oh < 1 || ow < 1)
    throw std::invalid_argument("resize_bicubic: output would be empty");

  // Horizontal pass then vertical pass; the kernel is separable.
  ImagePlane tmp(img.height, ow, img.channels);
  for (int x = 0; x < ow; ++x) {
    double sx = (x + 0.5) * img.width / ow - 0.5;
    int x0 = static_cast<int>(std::floor(sx)) - 1;
    double w[4];
    for (int k = 0; k < 4; ++k) w[k] = cubic_kernel(sx - (x0 + k));
    for (int y = 0; y < img.height; ++y)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k)
          acc += w[k] * img.at(y, clampi(x0 + k, 0, img.width - 1), c);
        tmp.at(y, x, c) = acc;
      }
  }
  ImagePlane out(oh, ow, img.channels);
  for (int y = 0; y < oh; ++y) {
    double sy = (y + 0.5) * img.height / oh - 0.5;
    int y0 = static_cast<int>(std::floor(sy)) - 1;
    double w[4];
    for (int k = 0; k < 4; ++k) w[k] = cubic_kernel(sy - (y0 + k));
    for (int x = 0; x < ow; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k)
          acc += w[k] * tmp.at(clampi(y0 + k, 0, img.height - 1), x, c);
        out.at(y, x, c) = clip ? std::min(1.0, std::max(0.0, acc)) : acc;
      }
  }
  return out;
}

}  // namespace

ImagePlane resize_bicubic(const ImagePlane& img, double scale) {
  return resize_bicubic_impl(img, scale, true);
}

ImagePlane resize_bicubic_unclipped(const ImagePlane& img, double scale) {
  return resize_bicubic_impl(img, scale, false);
}

FeatureMap pixel_unshuffle(const FeatureMap& f, int r) {
  if (r < 1) throw std::invalid_argument("pixel_unshuffle: r must be positive");
  if (f.height % r != 0 || f.width % r != 0)
    throw std::invalid_argument("pixel_unshuffle: dims not divisible by r");
  FeatureMap out(f.channels * r * r, f.height / r, f.width / r, f.scale);
  for (int c = 0; c < f.channels; ++c)
    for (int by = 0; by < r; ++by)
      for (int bx = 0; bx < r; ++bx) {
        int oc = c * r * r + by * r + bx;
        for (int y = 0; y < out.height; ++y)
          for (int x = 0; x < out.width; ++x)
            out.at(oc, y, x) = f.at(c, y * r + by, x * r + bx);
      }
  return out;
}

FeatureMap pixel_shuffle(const FeatureMap& f, int r) {
  if (r < 1) throw std::invalid_argument("pixel_shuffle: r must be positive");
  if (f.channels % (r * r) != 0)
    throw std::invalid_argument("pixel_shuffle: channels not divisible by r^2");
  FeatureMap out(f.channels / (r * r), f.height * r, f.width * r, f.scale);
  for (int oc = 0; oc < out.channels; ++oc)
    for (int by = 0; by < r; ++by)
      for (int bx = 0; bx < r; ++bx) {
        int c = oc * r * r + by * r + bx;
        for (int y = 0; y < f.height; ++y)
          for (int x = 0; x < f.width; ++x)
            out.at(oc, y * r + by, x * r + bx) = f.at(c, y, x);
      }
  return out;
}

ImagePlane backward_warp(const ImagePlane& img, const FlowField& flow) {
  if (flow.height != img.height || flow.width != img.width)
    throw std::invalid_argument("backward_warp: flow/image shape mismatch");
  ImagePlane out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double sy = y + flow.dy_at(y, x);
      double sx = x + flow.dx_at(y, x);
      // Clamp-to-edge: out-of-bounds samples use the nearest border pixel.
      sy = std::min(static_cast<double>(img.height - 1), std::max(0.0, sy));
      sx = std::min(static_cast<double>(img.width - 1), std::max(0.0, sx));
      int y0 = static_cast<int>(std::floor(sy));
      int x0 = static_cast<int>(std::floor(sx));
      int y1 = std::min(y0 + 1, img.height - 1);
      int x1 = std::min(x0 + 1, img.width - 1);
      double fy = sy - y0;
      double fx = sx - x0;
      for (int c = 0; c < img.channels; ++c) {
        double v00 = img.at(y0, x0, c), v01 = img.at(y0, x1, c);
        double v10 = img.at(y1, x0, c), v11 = img.at(y1, x1, c);
        out.at(y, x, c) = (1 - fy) * ((1 - fx) * v00 + fx * v01) +
                          fy * ((1 - fx) * v10 + fx * v11);
      }
    }
  return out;
}

double mse(const ImagePlane& a, const ImagePlane& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mse: shape mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

double rmse(const ImagePlane& a, const ImagePlane& b) {
  return std::sqrt(mse(a, b));
}

double psnr(const ImagePlane& a, const ImagePlane& b) {
  double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

namespace {

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(size);
  double sum = 0.0;
  int half = size / 2;
  for (int i = 0; i < size; ++i) {
    double d = i - half;
    w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Windowed moments of one channel, Gaussian-weighted, valid region only.
struct SsimMoments {
  std::vector<double> mu_a, mu_b, va, vb, vab;
  int h = 0, w = 0;
};

SsimMoments ssim_moments(const ImagePlane& a, const ImagePlane& b, int c) {
  const int win = 11;
  const auto g = gaussian_window(win, 1.5);
  int oh = a.height - win + 1;
  int ow = a.width - win + 1;
  SsimMoments m;
  m.h = oh;
  m.w = ow;
  size_t n = static_cast<size_t>(oh) * ow;
  m.mu_a.resize(n);
  m.mu_b.resize(n);
  m.va.resize(n);
  m.vb.resize(n);
  m.vab.resize(n);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
          double wgt = g[i] * g[j];
          double pa = a.at(y + i, x + j, c);
          double pb = b.at(y + i, x + j, c);
          ma += wgt * pa;
          mb += wgt * pb;
          saa += wgt * pa * pa;
          sbb += wgt * pb * pb;
          sab += wgt * pa * pb;
        }
      size_t idx = static_cast<size_t>(y) * ow + x;
      m.mu_a[idx] = ma;
      m.mu_b[idx] = mb;
      m.va[idx] = saa - ma * ma;
      m.vb[idx] = sbb - mb * mb;
      m.vab[idx] = sab - ma * mb;
    }
  return m;
}

}  // namespace

double ssim(const ImagePlane& a, const ImagePlane& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
  if (a.height < 11 || a.width < 11)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    SsimMoments m = ssim_moments(a, b, c);
    double acc = 0.0;
    for (size_t i = 0; i < m.mu_a.size(); ++i) {
      double num = (2 * m.mu_a[i] * m.mu_b[i] + c1) * (2 * m.vab[i] + c2);
      double den = (m.mu_a[i] * m.mu_a[i] + m.mu_b[i] * m.mu_b[i] + c1) *
                   (m.va[i] + m.vb[i] + c2);
      acc += num / den;
    }
    total += acc / static_cast<double>(m.mu_a.size());
  }
  return total / a.channels;
}

namespace {

// Copies `img` with the centered (H/r)x(W/r) window masked out by replicating
// a sentinel; used to restrict metrics to the surrounding area.
void center_window(const ImagePlane& img, int r, int* y0, int* x0, int* h,
                   int* w) {
  *h = img.height / r;
  *w = img.width / r;
  *y0 = (img.height - *h) / 2;
  *x0 = (img.width - *w) / 2;
}

}  // namespace

double psnr_outside_center(const ImagePlane& a, const ImagePlane& b, int r) {
  if (!a.same_shape(b)) throw std::invalid_argument("psnr: shape mismatch");
  int y0, x0, h, w;
  center_window(a, r, &y0, &x0, &h, &w);
  double acc = 0.0;
  size_t count = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      if (y >= y0 && y < y0 + h && x >= x0 && x < x0 + w) continue;
      for (int c = 0; c < a.channels; ++c) {
        double d = a.at(y, x, c) - b.at(y, x, c);
        acc += d * d;
        ++count;
      }
    }
  if (count == 0) throw std::invalid_argument("psnr: empty corner region");
  double m = acc / static_cast<double>(count);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

double ssim_outside_center(const ImagePlane& a, const ImagePlane& b, int r) {
  if (!a.same_shape(b)) throw std::invalid_argument("ssim: shape mismatch");
  if (a.height < 11 || a.width < 11)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  int y0, x0, h, w;
  center_window(a, r, &y0, &x0, &h, &w);
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    SsimMoments m = ssim_moments(a, b, c);
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    double acc = 0.0;
    size_t count = 0;
    for (int y = 0; y < m.h; ++y)
      for (int x = 0; x < m.w; ++x) {
        // A window centered inside the excluded area does not contribute.
        int cy = y + 5, cx = x + 5;
        if (cy >= y0 && cy < y0 + h && cx >= x0 && cx < x0 + w) continue;
        size_t idx = static_cast<size_t>(y) * m.w + x;
        double num = (2 * m.mu_a[idx] * m.mu_b[idx] + c1) * (2 * m.vab[idx] + c2);
        double den =
            (m.mu_a[idx] * m.mu_a[idx] + m.mu_b[idx] * m.mu_b[idx] + c1) *
            (m.va[idx] + m.vb[idx] + c2);
        acc += num / den;
        ++count;
      }
    if (count == 0) throw std::invalid_argument("ssim: empty corner region");
    total += acc / static_cast<double>(count);
  }
  return total / a.channels;
}

ImagePlane clip01(ImagePlane img) {
  for (double& v : img.data) v = std::min(1.0, std::max(0.0, v));
  return img;
}

ImagePlane gaussian_blur(const ImagePlane& img, double sigma) {
  if (sigma <= 0.0) return img;
  int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-i * i / (2.0 * sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;

  ImagePlane tmp(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * img.at(y, clampi(x + i, 0, img.width - 1), c);
        tmp.at(y, x, c) = acc;
      }
  ImagePlane out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i)
          acc += k[i + radius] * tmp.at(clampi(y + i, 0, img.height - 1), x, c);
        out.at(y, x, c) = acc;
      }
  return out;
}

ImagePlane flip_horizontal(const ImagePlane& img) {
  ImagePlane out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) = img.at(y, img.width - 1 - x, c);
  return out;
}

ImagePlane flip_vertical(const ImagePlane& img) {
  ImagePlane out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) = img.at(img.height - 1 - y, x, c);
  return out;
}

ImagePlane rotate90(const ImagePlane& img) {
  ImagePlane out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(img.width - 1 - x, y, c) = img.at(y, x, c);
  return out;
}

FlowField invert_flow(const FlowField& f, int iterations) {
  FlowField g(f.height, f.width);
  auto sample = [&](const std::vector<double>& plane, double sy, double sx) {
    sy = std::min(static_cast<double>(f.height - 1), std::max(0.0, sy));
    sx = std::min(static_cast<double>(f.width - 1), std::max(0.0, sx));
    int y0 = static_cast<int>(std::floor(sy));
    int x0 = static_cast<int>(std::floor(sx));
    int y1 = std::min(y0 + 1, f.height - 1);
    int x1 = std::min(x0 + 1, f.width - 1);
    double fy = sy - y0, fx = sx - x0;
    auto v = [&](int y, int x) {
      return plane[static_cast<size_t>(y) * f.width + x];
    };
    return (1 - fy) * ((1 - fx) * v(y0, x0) + fx * v(y0, x1)) +
           fy * ((1 - fx) * v(y1, x0) + fx * v(y1, x1));
  };
  for (int it = 0; it < iterations; ++it) {
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x) {
        double sy = y + g.dy_at(y, x);
        double sx = x + g.dx_at(y, x);
        g.dy_at(y, x) = -sample(f.dy, sy, sx);
        g.dx_at(y, x) = -sample(f.dx, sy, sx);
      }
  }
  return g;
}

FeatureMap image_to_features(const ImagePlane& img, int scale) {
  FeatureMap f(img.channels, img.height, img.width, scale);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) f.at(c, y, x) = img.at(y, x, c);
  return f;
}

ImagePlane features_to_image(const FeatureMap& f) {
  ImagePlane img(f.height, f.width, f.channels);
  for (int c = 0; c < f.channels; ++c)
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x) img.at(y, x, c) = f.at(c, y, x);
  return img;
}

}  // namespace zsr
