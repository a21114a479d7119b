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

#include "zsr/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace zsr::report {

namespace {

const double kSeriesColors[4][3] = {
    {0.85, 0.25, 0.2}, {0.2, 0.4, 0.85}, {0.2, 0.65, 0.3}, {0.6, 0.3, 0.7}};

void draw_line(ImagePlane& img, double y0, double x0, double y1, double x1,
               const double col[3]) {
  int steps = static_cast<int>(std::hypot(y1 - y0, x1 - x0)) + 1;
  for (int s = 0; s <= steps; ++s) {
    double t = static_cast<double>(s) / steps;
    int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    if (y >= 0 && y < img.height && x >= 0 && x < img.width)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = col[c];
  }
}

}  // namespace

ImagePlane render_loss_curve(const std::vector<std::vector<double>>& series,
                             int width, int height) {
  ImagePlane img(height, width, 3, 1.0);
  const double axis[3] = {0.1, 0.1, 0.1};
  const int m = 32;  // margin
  draw_line(img, height - m, m, height - m, width - m, axis);
  draw_line(img, m, m, height - m, m, axis);

  double lo = 1e300, hi = -1e300;
  size_t max_len = 0;
  for (const auto& s : series) {
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    max_len = std::max(max_len, s.size());
  }
  if (max_len < 2) return img;
  if (hi <= lo) hi = lo + 1.0;

  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    if (s.size() < 2) continue;
    const double* col = kSeriesColors[si % 4];
    for (size_t i = 1; i < s.size(); ++i) {
      auto px = [&](size_t idx, double v) {
        double x = m + (width - 2.0 * m) * idx / (max_len - 1);
        double y = (height - m) - (height - 2.0 * m) * (v - lo) / (hi - lo);
        return std::pair<double, double>(y, x);
      };
      auto [ya, xa] = px(i - 1, s[i - 1]);
      auto [yb, xb] = px(i, s[i]);
      draw_line(img, ya, xa, yb, xb, col);
    }
  }
  return img;
}

ImagePlane render_bars(const std::vector<double>& values, int width,
                       int height) {
  ImagePlane img(height, width, 3, 1.0);
  const double axis[3] = {0.1, 0.1, 0.1};
  const int m = 32;
  draw_line(img, height - m, m, height - m, width - m, axis);
  if (values.empty()) return img;
  double hi = *std::max_element(values.begin(), values.end());
  if (hi <= 0) hi = 1.0;
  int n = static_cast<int>(values.size());
  double slot = (width - 2.0 * m) / n;
  for (int i = 0; i < n; ++i) {
    const double* col = kSeriesColors[i % 4];
    int x0 = static_cast<int>(m + i * slot + slot * 0.15);
    int x1 = static_cast<int>(m + i * slot + slot * 0.85);
    int top = static_cast<int>((height - m) -
                               (height - 2.0 * m) * values[i] / hi);
    for (int y = top; y < height - m; ++y)
      for (int x = x0; x < x1; ++x)
        if (y >= 0 && y < img.height && x >= 0 && x < img.width)
          for (int c = 0; c < 3; ++c) img.at(y, x, c) = col[c];
  }
  return img;
}

ImagePlane render_montage(const std::vector<std::vector<ImagePlane>>& rows,
                          int pad) {
  if (rows.empty() || rows[0].empty())
    throw std::invalid_argument("render_montage: no panels");
  int cell_h = rows[0][0].height, cell_w = rows[0][0].width;
  for (const auto& row : rows)
    for (const auto& p : row)
      if (p.height != cell_h || p.width != cell_w)
        throw std::invalid_argument("render_montage: unequal panel sizes");
  int cols = static_cast<int>(rows[0].size());
  int h = static_cast<int>(rows.size()) * (cell_h + pad) + pad;
  int w = cols * (cell_w + pad) + pad;
  ImagePlane img(h, w, 3, 1.0);
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < rows[r].size(); ++c) {
      int oy = pad + static_cast<int>(r) * (cell_h + pad);
      int ox = pad + static_cast<int>(c) * (cell_w + pad);
      for (int y = 0; y < cell_h; ++y)
        for (int x = 0; x < cell_w; ++x)
          for (int ch = 0; ch < 3; ++ch)
            img.at(oy + y, ox + x, ch) = rows[r][c].at(y, x, ch);
    }
  return img;
}

std::vector<std::vector<double>> read_train_log(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_train_log: cannot open " + path);
  std::vector<std::vector<double>> out(2);
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string item;
    std::vector<double> cells;
    while (std::getline(is, item, ',')) cells.push_back(std::stod(item));
    if (cells.size() >= 3) {
      out[0].push_back(cells[1]);
      out[1].push_back(cells[2]);
    }
  }
  return out;
}

std::vector<std::pair<std::string, double>> read_eval_psnr(
    const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_eval_psnr: cannot open " + path);
  std::vector<std::pair<std::string, double>> out;
  std::string line;
  bool header_seen = false;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;  // column header
      continue;
    }
    auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    std::string id = line.substr(0, comma);
    auto rest = line.substr(comma + 1);
    auto c2 = rest.find(',');
    out.emplace_back(id, std::stod(rest.substr(0, c2)));
  }
  return out;
}

}  // namespace zsr::report
