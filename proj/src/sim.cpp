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

#include "zsr/sim.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "zsr/rng.hpp"

namespace fs = std::filesystem;

namespace zsr::sim {

namespace {

void fill_rect(ImagePlane& img, int y0, int x0, int h, int w,
               const double col[3]) {
  for (int y = std::max(0, y0); y < std::min(img.height, y0 + h); ++y)
    for (int x = std::max(0, x0); x < std::min(img.width, x0 + w); ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = col[c];
}

void draw_stroke(ImagePlane& img, double y0, double x0, double y1, double x1,
                 int thickness, const double col[3]) {
  int steps = static_cast<int>(std::hypot(y1 - y0, x1 - x0)) * 2 + 2;
  for (int s = 0; s <= steps; ++s) {
    double t = static_cast<double>(s) / steps;
    int cy = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    int cx = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    for (int dy = 0; dy < thickness; ++dy)
      for (int dx = 0; dx < thickness; ++dx) {
        int y = cy + dy, x = cx + dx;
        if (y >= 0 && y < img.height && x >= 0 && x < img.width)
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = col[c];
      }
  }
}

}  // namespace

ImagePlane synth_scene(uint64_t seed, int height, int width) {
  if (height < 64 || width < 64)
    throw std::invalid_argument("synth_scene: size must be at least 64x64");
  Rng rng(derive_seed(seed, 0x5ce9e));
  ImagePlane img(height, width, 3);

  // Smooth base gradient.
  double gx[3], gy[3], g0[3];
  for (int c = 0; c < 3; ++c) {
    gx[c] = rng.uniform(-0.3, 0.3);
    gy[c] = rng.uniform(-0.3, 0.3);
    g0[c] = rng.uniform(0.25, 0.65);
  }
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = g0[c] + gx[c] * x / width + gy[c] * y / height;

  // Flat rectangles of random color.
  int n_rect = 6 + static_cast<int>(rng.uniform_int(5));
  for (int i = 0; i < n_rect; ++i) {
    int h = static_cast<int>(rng.uniform(0.10, 0.35) * height);
    int w = static_cast<int>(rng.uniform(0.10, 0.35) * width);
    int y0 = static_cast<int>(rng.uniform_int(std::max(1, height - h)));
    int x0 = static_cast<int>(rng.uniform_int(std::max(1, width - w)));
    double col[3];
    for (double& c : col) c = rng.uniform(0.08, 0.92);
    fill_rect(img, y0, x0, h, w, col);
  }

  // Stripe bands; period stays above 9 px so content survives a x4 cycle.
  int n_stripe = 2 + static_cast<int>(rng.uniform_int(2));
  for (int i = 0; i < n_stripe; ++i) {
    int h = static_cast<int>(rng.uniform(0.15, 0.3) * height);
    int w = static_cast<int>(rng.uniform(0.15, 0.3) * width);
    int y0 = static_cast<int>(rng.uniform_int(std::max(1, height - h)));
    int x0 = static_cast<int>(rng.uniform_int(std::max(1, width - w)));
    double period = rng.uniform(9.0, 20.0);
    bool vertical = rng.uniform() < 0.5;
    double a[3], b[3];
    for (int c = 0; c < 3; ++c) {
      a[c] = rng.uniform(0.1, 0.45);
      b[c] = rng.uniform(0.55, 0.9);
    }
    for (int y = y0; y < std::min(height, y0 + h); ++y)
      for (int x = x0; x < std::min(width, x0 + w); ++x) {
        double t = vertical ? x : y;
        double phase = std::sin(2.0 * M_PI * t / period);
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = phase > 0 ? a[c] : b[c];
      }
  }

  // One checker patch.
  {
    int cell = 6 + static_cast<int>(rng.uniform_int(5));
    int h = static_cast<int>(rng.uniform(0.15, 0.25) * height);
    int w = static_cast<int>(rng.uniform(0.15, 0.25) * width);
    int y0 = static_cast<int>(rng.uniform_int(std::max(1, height - h)));
    int x0 = static_cast<int>(rng.uniform_int(std::max(1, width - w)));
    double a = rng.uniform(0.1, 0.35), b = rng.uniform(0.6, 0.9);
    for (int y = y0; y < std::min(height, y0 + h); ++y)
      for (int x = x0; x < std::min(width, x0 + w); ++x) {
        double v = (((y - y0) / cell + (x - x0) / cell) % 2 == 0) ? a : b;
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = v;
      }
  }

  // Glyph-like strokes.
  int n_stroke = 12 + static_cast<int>(rng.uniform_int(12));
  for (int i = 0; i < n_stroke; ++i) {
    double y0 = rng.uniform(0, height - 1);
    double x0 = rng.uniform(0, width - 1);
    double len = rng.uniform(0.04, 0.15) * height;
    double ang = rng.uniform(0, 2 * M_PI);
    int thick = 2 + static_cast<int>(rng.uniform_int(2));
    double col[3];
    double base = rng.uniform() < 0.5 ? rng.uniform(0.02, 0.15)
                                      : rng.uniform(0.85, 0.98);
    for (double& c : col) c = base;
    draw_stroke(img, y0, x0, y0 + len * std::sin(ang), x0 + len * std::cos(ang),
                thick, col);
    if (rng.uniform() < 0.5) {  // L-shaped corner
      double ang2 = ang + M_PI / 2.0;
      draw_stroke(img, y0, x0, y0 + len * 0.6 * std::sin(ang2),
                  x0 + len * 0.6 * std::cos(ang2), thick, col);
    }
  }

  // Mild band-limiting: keeps edges crisp enough for the Laplacian floor
  // while making the content representable on the x4-downscaled grid.
  img = gaussian_blur(img, 0.9);
  return clip01(std::move(img));
}

double laplacian_top_quartile(const ImagePlane& img) {
  std::vector<double> mags;
  mags.reserve(static_cast<size_t>(img.height) * img.width);
  for (int y = 1; y < img.height - 1; ++y)
    for (int x = 1; x < img.width - 1; ++x) {
      double acc = 0.0;
      for (int c = 0; c < img.channels; ++c) {
        double lap = img.at(y - 1, x, c) + img.at(y + 1, x, c) +
                     img.at(y, x - 1, c) + img.at(y, x + 1, c) -
                     4.0 * img.at(y, x, c);
        acc += std::fabs(lap);
      }
      mags.push_back(acc / img.channels);
    }
  std::sort(mags.begin(), mags.end(), std::greater<double>());
  size_t q = std::max<size_t>(1, mags.size() / 4);
  double sum = 0.0;
  for (size_t i = 0; i < q; ++i) sum += mags[i];
  return sum / static_cast<double>(q);
}

namespace {

FlowField smooth_parallax(int h, int w, double amplitude, Rng& rng) {
  FlowField f(h, w);
  if (amplitude <= 0.0) return f;
  for (int comp = 0; comp < 2; ++comp) {
    double a[3], ky[3], kx[3], ph[3];
    for (int m = 0; m < 3; ++m) {
      a[m] = rng.uniform(0.3, 1.0);
      ky[m] = rng.uniform(0.5, 2.0);
      kx[m] = rng.uniform(0.5, 2.0);
      ph[m] = rng.uniform(0, 2 * M_PI);
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = 0.0;
        for (int m = 0; m < 3; ++m)
          v += a[m] *
               std::sin(2.0 * M_PI * (ky[m] * y / h + kx[m] * x / w) + ph[m]);
        (comp == 0 ? f.dy_at(y, x) : f.dx_at(y, x)) = v;
      }
  }
  double peak = 0.0;
  for (size_t i = 0; i < f.dy.size(); ++i)
    peak = std::max(peak, std::hypot(f.dy[i], f.dx[i]));
  if (peak > 0.0) {
    double s = amplitude / peak;
    for (double& v : f.dy) v *= s;
    for (double& v : f.dx) v *= s;
  }
  return f;
}

ImagePlane add_noise(ImagePlane img, double sigma, Rng& rng) {
  if (sigma <= 0.0) return img;
  for (double& v : img.data) v += rng.normal(0.0, sigma);
  return clip01(std::move(img));
}

}  // namespace

ZoomCapture simulate_capture(const ImagePlane& scene, const CaptureParams& p,
                             uint64_t seed) {
  if (scene.height / p.r_t < 32 || scene.width / p.r_t < 32)
    throw std::invalid_argument("simulate_capture: scene too small");
  if (scene.height % (p.r_t * p.r_w) != 0 || scene.width % (p.r_t * p.r_w) != 0)
    throw std::invalid_argument("simulate_capture: scene dims not divisible");
  Rng rng(derive_seed(seed, 0xcab1e));

  ZoomCapture cap;

  // Telephoto: the reference-quality capture of the central FOV.
  cap.tele = center_crop(scene, p.r_t);
  cap.tele = add_noise(std::move(cap.tele), p.noise_sigma * 0.1, rng);

  // Wide-angle: aligned, half the blur, light noise.
  {
    ImagePlane w = center_crop(scene, p.r_w);
    if (p.blur_sigma > 0) w = gaussian_blur(w, p.blur_sigma * 0.5);
    w = resize_bicubic(w, 1.0 / p.r_w);
    cap.wide = add_noise(std::move(w), p.noise_sigma * 0.3, rng);
  }

  // Ultra-wide: blur, downscale, smooth parallax warp, color shift, noise.
  {
    ImagePlane u = p.blur_sigma > 0 ? gaussian_blur(scene, p.blur_sigma) : scene;
    u = resize_bicubic(u, 1.0 / p.r_t);
    FlowField par =
        smooth_parallax(u.height, u.width, p.parallax_amplitude, rng);
    u = backward_warp(u, par);
    for (int y = 0; y < u.height; ++y)
      for (int x = 0; x < u.width; ++x)
        for (int c = 0; c < 3; ++c)
          u.at(y, x, c) = u.at(y, x, c) * p.color_gain[c] + p.color_bias[c];
    u = clip01(std::move(u));
    cap.ultra_wide = add_noise(std::move(u), p.noise_sigma, rng);

    CaptureTruth truth;
    truth.scene = scene;
    truth.parallax = std::move(par);
    truth.params = p;
    cap.truth = std::move(truth);
  }
  return cap;
}

namespace {

// Bilinear lookup into a flow plane with border clamp.
double sample_plane(const std::vector<double>& plane, int h, int w, double sy,
                    double sx) {
  sy = std::min(static_cast<double>(h - 1), std::max(0.0, sy));
  sx = std::min(static_cast<double>(w - 1), std::max(0.0, sx));
  int y0 = static_cast<int>(std::floor(sy));
  int x0 = static_cast<int>(std::floor(sx));
  int y1 = std::min(y0 + 1, h - 1);
  int x1 = std::min(x0 + 1, w - 1);
  double fy = sy - y0, fx = sx - x0;
  auto v = [&](int y, int x) { return plane[static_cast<size_t>(y) * w + x]; };
  return (1 - fy) * ((1 - fx) * v(y0, x0) + fx * v(y0, x1)) +
         fy * ((1 - fx) * v(y1, x0) + fx * v(y1, x1));
}

PairTruth derive_pair_truth(const ZoomCapture& c) {
  const CaptureTruth& t = *c.truth;
  const int r = t.params.r_t;
  const int hu = c.ultra_wide.height, wu = c.ultra_wide.width;
  const int hl = hu / r, wl = wu / r;
  const int offy = (hu - hl) / 2, offx = (wu - wl) / 2;

  PairTruth out;
  out.params = t.params;

  // Warping LR toward GT undoes the parallax: restrict the inverse field.
  FlowField inv = invert_flow(t.parallax);
  out.lr_to_gt = FlowField(hl, wl);
  for (int y = 0; y < hl; ++y)
    for (int x = 0; x < wl; ++x) {
      out.lr_to_gt.dy_at(y, x) = inv.dy_at(y + offy, x + offx);
      out.lr_to_gt.dx_at(y, x) = inv.dx_at(y + offy, x + offx);
    }

  // GT-grid field carrying the forward parallax into the upsampled-LR
  // geometry; sampled at the LR positions the output pixels correspond to.
  out.gt_align = FlowField(hl * r, wl * r);
  for (int y = 0; y < hl * r; ++y)
    for (int x = 0; x < wl * r; ++x) {
      double ly = (y + 0.5) / r - 0.5 + offy;
      double lx = (x + 0.5) / r - 0.5 + offx;
      out.gt_align.dy_at(y, x) = r * sample_plane(t.parallax.dy, hu, wu, ly, lx);
      out.gt_align.dx_at(y, x) = r * sample_plane(t.parallax.dx, hu, wu, ly, lx);
    }
  return out;
}

}  // namespace

TrainingPair make_training_pair(const ZoomCapture& c) {
  int r_t = c.truth ? c.truth->params.r_t : 4;
  int r_w = c.truth ? c.truth->params.r_w : 2;
  if (c.ultra_wide.height % r_t != 0 || c.ultra_wide.width % r_t != 0)
    throw std::invalid_argument(
        "make_training_pair: ultra-wide dims not divisible by r_t");
  if (c.wide.height % r_w != 0 || c.wide.width % r_w != 0)
    throw std::invalid_argument(
        "make_training_pair: wide dims not divisible by r_w");
  TrainingPair pair;
  pair.id = c.id;
  pair.lr = center_crop(c.ultra_wide, r_t);
  pair.ref_t = center_crop(c.tele, r_t);
  pair.ref_w = center_crop(c.wide, r_w);
  pair.gt = c.tele;
  if (c.truth) pair.truth = derive_pair_truth(c);
  return pair;
}

FlowField flow_flip_h(const FlowField& f) {
  FlowField out(f.height, f.width);
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      out.dy_at(y, x) = f.dy_at(y, f.width - 1 - x);
      out.dx_at(y, x) = -f.dx_at(y, f.width - 1 - x);
    }
  return out;
}

FlowField flow_flip_v(const FlowField& f) {
  FlowField out(f.height, f.width);
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      out.dy_at(y, x) = -f.dy_at(f.height - 1 - y, x);
      out.dx_at(y, x) = f.dx_at(f.height - 1 - y, x);
    }
  return out;
}

FlowField flow_rot90(const FlowField& f) {
  FlowField out(f.width, f.height);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      // out(Y,X) corresponds to in(X, W-1-Y).
      out.dy_at(y, x) = -f.dx_at(x, f.width - 1 - y);
      out.dx_at(y, x) = f.dy_at(x, f.width - 1 - y);
    }
  return out;
}

TrainingPair augment(const TrainingPair& pair, uint64_t seed) {
  Rng rng(derive_seed(seed, 0xa46));
  bool hf = rng.uniform() < 0.5;
  bool vf = rng.uniform() < 0.5;
  bool rot = rng.uniform() < 0.5;

  TrainingPair out = pair;
  auto apply_img = [&](ImagePlane img) {
    if (hf) img = flip_horizontal(img);
    if (vf) img = flip_vertical(img);
    if (rot) img = rotate90(img);
    return img;
  };
  auto apply_flow = [&](FlowField f) {
    if (hf) f = flow_flip_h(f);
    if (vf) f = flow_flip_v(f);
    if (rot) f = flow_rot90(f);
    return f;
  };
  out.lr = apply_img(pair.lr);
  out.ref_t = apply_img(pair.ref_t);
  if (pair.ref_w) out.ref_w = apply_img(*pair.ref_w);
  out.gt = apply_img(pair.gt);
  if (pair.truth) {
    out.truth->lr_to_gt = apply_flow(pair.truth->lr_to_gt);
    out.truth->gt_align = apply_flow(pair.truth->gt_align);
  }
  return out;
}

std::string params_to_text(const CaptureParams& p) {
  std::ostringstream os;
  os << "blur_sigma=" << p.blur_sigma << "\n";
  os << "parallax_amplitude=" << p.parallax_amplitude << "\n";
  os << "color_gain=" << p.color_gain[0] << "," << p.color_gain[1] << ","
     << p.color_gain[2] << "\n";
  os << "color_bias=" << p.color_bias[0] << "," << p.color_bias[1] << ","
     << p.color_bias[2] << "\n";
  os << "noise_sigma=" << p.noise_sigma << "\n";
  os << "r_w=" << p.r_w << "\n";
  os << "r_t=" << p.r_t << "\n";
  return os.str();
}

CaptureParams params_from_text(const std::string& text) {
  CaptureParams p;
  std::istringstream is(text);
  std::string line;
  auto parse3 = [](const std::string& s, double out[3]) {
    std::istringstream vs(s);
    std::string item;
    for (int i = 0; i < 3 && std::getline(vs, item, ','); ++i)
      out[i] = std::stod(item);
  };
  while (std::getline(is, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    if (key == "blur_sigma") p.blur_sigma = std::stod(val);
    else if (key == "parallax_amplitude") p.parallax_amplitude = std::stod(val);
    else if (key == "color_gain") parse3(val, p.color_gain);
    else if (key == "color_bias") parse3(val, p.color_bias);
    else if (key == "noise_sigma") p.noise_sigma = std::stod(val);
    else if (key == "r_w") p.r_w = std::stoi(val);
    else if (key == "r_t") p.r_t = std::stoi(val);
  }
  return p;
}

void write_capture_dir(const std::string& root, const ZoomCapture& c) {
  fs::path dir = fs::path(root) / c.id;
  fs::create_directories(dir);
  write_png((dir / "ultrawide.png").string(), c.ultra_wide);
  write_png((dir / "wide.png").string(), c.wide);
  write_png((dir / "tele.png").string(), c.tele);
  if (c.truth) {
    fs::path tdir = dir / "truth";
    fs::create_directories(tdir);
    write_png((tdir / "scene.png").string(), c.truth->scene);
    write_flow((tdir / "parallax.zsflow").string(), c.truth->parallax);
    std::ofstream pf(tdir / "params.txt");
    pf << params_to_text(c.truth->params);
  }
}

std::vector<ZoomCapture> load_capture_dir(const std::string& root, int r_w,
                                          int r_t) {
  if (!fs::is_directory(root))
    throw std::runtime_error("load_capture_dir: not a directory: " + root);
  std::vector<fs::path> scene_dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) scene_dirs.push_back(e.path());
  std::sort(scene_dirs.begin(), scene_dirs.end());

  std::vector<ZoomCapture> out;
  for (const auto& dir : scene_dirs) {
    fs::path up = dir / "ultrawide.png";
    fs::path wp = dir / "wide.png";
    fs::path tp = dir / "tele.png";
    if (!fs::exists(up) || !fs::exists(wp) || !fs::exists(tp)) {
      std::cerr << "load_capture_dir: skipping incomplete scene "
                << dir.filename().string() << "\n";
      continue;
    }
    ZoomCapture c;
    c.id = dir.filename().string();
    c.ultra_wide = read_png(up.string());
    c.wide = read_png(wp.string());
    c.tele = read_png(tp.string());

    // Normalize to a common 16-divisible size so every downstream grid
    // (crops by r_t and r_w, plus the x4 matching lattice) divides evenly.
    int th = std::max(32, c.ultra_wide.height / 16 * 16);
    int tw = std::max(32, c.ultra_wide.width / 16 * 16);
    auto fit = [&](ImagePlane& img) {
      if (img.height == th && img.width == tw) return;
      double s = static_cast<double>(th) / img.height;
      img = resize_bicubic(img, s);
      if (img.height != th || img.width != tw) {
        ImagePlane fixed(th, tw, 3);
        for (int y = 0; y < th; ++y)
          for (int x = 0; x < tw; ++x)
            for (int ch = 0; ch < 3; ++ch)
              fixed.at(y, x, ch) = img.at(std::min(y, img.height - 1),
                                          std::min(x, img.width - 1), ch);
        img = fixed;
      }
    };
    fit(c.ultra_wide);
    fit(c.wide);
    fit(c.tele);

    fs::path tdir = dir / "truth";
    if (fs::exists(tdir / "parallax.zsflow") && fs::exists(tdir / "scene.png")) {
      CaptureTruth truth;
      truth.scene = read_png((tdir / "scene.png").string());
      truth.parallax = read_flow((tdir / "parallax.zsflow").string());
      if (fs::exists(tdir / "params.txt")) {
        std::ifstream pf(tdir / "params.txt");
        std::stringstream ss;
        ss << pf.rdbuf();
        truth.params = params_from_text(ss.str());
      }
      truth.params.r_w = r_w;
      truth.params.r_t = r_t;
      c.truth = std::move(truth);
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<ZoomCapture> make_dataset(const DatasetSpec& spec, uint64_t seed) {
  std::vector<ZoomCapture> out;
  out.reserve(static_cast<size_t>(spec.scenes));
  for (int i = 0; i < spec.scenes; ++i) {
    Rng rng(derive_seed(seed, 0xda7a, static_cast<uint64_t>(i)));
    ImagePlane scene =
        synth_scene(derive_seed(seed, 0x5ce, i), spec.scene_size,
                    spec.scene_size);
    CaptureParams p = spec.base;
    for (int c = 0; c < 3; ++c)
      p.color_gain[c] *=
          rng.uniform(1.0 - spec.gain_jitter, 1.0 + spec.gain_jitter);
    ZoomCapture cap = simulate_capture(scene, p, derive_seed(seed, 0xcab, i));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%03d", i);
    cap.id = buf;
    out.push_back(std::move(cap));
  }
  return out;
}

}  // namespace zsr::sim
