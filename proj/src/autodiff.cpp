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

#include "zsr/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace zsr::ad {

namespace {

std::atomic<uint64_t> g_order{1};

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

Var make_node(Tensor val, std::vector<Var> parents,
              std::function<void(Node&)> backfn) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  n->order = g_order.fetch_add(1, std::memory_order_relaxed);
  for (const auto& p : parents) n->requires_grad |= p->requires_grad;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backfn = std::move(backfn);
  }
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->val.same_shape(b->val))
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

void Node::ensure_grad() {
  if (grad.v.empty()) grad = Tensor(val.shape);
}

void Node::accumulate(const Tensor& g) {
  ensure_grad();
  for (size_t i = 0; i < grad.v.size(); ++i) grad.v[i] += g.v[i];
}

Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  n->order = g_order.fetch_add(1, std::memory_order_relaxed);
  n->requires_grad = false;
  return n;
}

Var leaf(Tensor t) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  n->order = g_order.fetch_add(1, std::memory_order_relaxed);
  n->requires_grad = true;
  return n;
}

void backward(const Var& root) {
  if (root->val.numel() != 1)
    throw std::invalid_argument("backward: root must be scalar");
  std::vector<Node*> nodes;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    nodes.push_back(n);
    for (const auto& p : n->parents)
      if (p->requires_grad) stack.push_back(p.get());
  }
  std::sort(nodes.begin(), nodes.end(),
            [](Node* a, Node* b) { return a->order > b->order; });
  root->ensure_grad();
  root->grad.v[0] += 1.0;
  for (Node* n : nodes) {
    if (n->backfn && !n->grad.v.empty()) n->backfn(*n);
  }
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out(a->val.shape);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a->val.v[i] + b->val.v[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->accumulate(n.grad);
    if (b->requires_grad) b->accumulate(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a->val.shape);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a->val.v[i] - b->val.v[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->accumulate(n.grad);
    if (b->requires_grad) {
      b->ensure_grad();
      for (size_t i = 0; i < n.grad.v.size(); ++i) b->grad.v[i] -= n.grad.v[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a->val.shape);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a->val.v[i] * b->val.v[i];
  return make_node(std::move(out), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) {
      a->ensure_grad();
      for (size_t i = 0; i < n.grad.v.size(); ++i)
        a->grad.v[i] += n.grad.v[i] * b->val.v[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (size_t i = 0; i < n.grad.v.size(); ++i)
        b->grad.v[i] += n.grad.v[i] * a->val.v[i];
    }
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor out(a->val.shape);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a->val.v[i] + s;
  return make_node(std::move(out), {a},
                   [a](Node& n) { a->accumulate(n.grad); });
}

Var mul_scalar(const Var& a, double s) {
  Tensor out(a->val.shape);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a->val.v[i] * s;
  return make_node(std::move(out), {a}, [a, s](Node& n) {
    a->ensure_grad();
    for (size_t i = 0; i < n.grad.v.size(); ++i)
      a->grad.v[i] += n.grad.v[i] * s;
  });
}

Var relu(const Var& a) {
  Tensor out(a->val.shape);
  for (size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = a->val.v[i] > 0.0 ? a->val.v[i] : 0.0;
  return make_node(std::move(out), {a}, [a](Node& n) {
    a->ensure_grad();
    for (size_t i = 0; i < n.grad.v.size(); ++i)
      if (a->val.v[i] > 0.0) a->grad.v[i] += n.grad.v[i];
  });
}

Var sigmoid(const Var& a) {
  Tensor out(a->val.shape);
  for (size_t i = 0; i < out.v.size(); ++i)
    out.v[i] = 1.0 / (1.0 + std::exp(-a->val.v[i]));
  auto n = make_node(std::move(out), {a}, nullptr);
  if (n->requires_grad) {
    // The closure lives in the node, so a raw self pointer avoids a cycle.
    n->backfn = [a, self = n.get()](Node& node) {
      a->ensure_grad();
      for (size_t i = 0; i < node.grad.v.size(); ++i) {
        double s = self->val.v[i];
        a->grad.v[i] += node.grad.v[i] * s * (1.0 - s);
      }
    };
  }
  return n;
}

Var abs_op(const Var& a) {
  Tensor out(a->val.shape);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = std::fabs(a->val.v[i]);
  return make_node(std::move(out), {a}, [a](Node& n) {
    a->ensure_grad();
    for (size_t i = 0; i < n.grad.v.size(); ++i) {
      double s = a->val.v[i] > 0.0 ? 1.0 : (a->val.v[i] < 0.0 ? -1.0 : 0.0);
      a->grad.v[i] += n.grad.v[i] * s;
    }
  });
}

Var mean_all(const Var& a) {
  Tensor out({1});
  double acc = 0.0;
  for (double v : a->val.v) acc += v;
  const double inv = 1.0 / static_cast<double>(a->val.numel());
  out.v[0] = acc * inv;
  return make_node(std::move(out), {a}, [a, inv](Node& n) {
    a->ensure_grad();
    double g = n.grad.v[0] * inv;
    for (double& d : a->grad.v) d += g;
  });
}

Var sum_all(const Var& a) {
  Tensor out({1});
  double acc = 0.0;
  for (double v : a->val.v) acc += v;
  out.v[0] = acc;
  return make_node(std::move(out), {a}, [a](Node& n) {
    a->ensure_grad();
    double g = n.grad.v[0];
    for (double& d : a->grad.v) d += g;
  });
}

Var concat_ch(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_ch: empty input");
  int h = xs[0]->val.dim(1), w = xs[0]->val.dim(2);
  int ctotal = 0;
  for (const auto& x : xs) {
    if (x->val.dim(1) != h || x->val.dim(2) != w)
      throw std::invalid_argument("concat_ch: spatial mismatch");
    ctotal += x->val.dim(0);
  }
  Tensor out({ctotal, h, w});
  size_t off = 0;
  for (const auto& x : xs) {
    std::copy(x->val.v.begin(), x->val.v.end(), out.v.begin() + off);
    off += x->val.v.size();
  }
  return make_node(std::move(out), xs, [xs](Node& n) {
    size_t off = 0;
    for (const auto& x : xs) {
      if (x->requires_grad) {
        x->ensure_grad();
        for (size_t i = 0; i < x->val.v.size(); ++i)
          x->grad.v[i] += n.grad.v[off + i];
      }
      off += x->val.v.size();
    }
  });
}

Var slice_vec(const Var& x, int start, int len) {
  Tensor out({len});
  for (int i = 0; i < len; ++i) out.v[i] = x->val.v[start + i];
  return make_node(std::move(out), {x}, [x, start, len](Node& n) {
    x->ensure_grad();
    for (int i = 0; i < len; ++i) x->grad.v[start + i] += n.grad.v[i];
  });
}

Var slice_ch(const Var& x, int start, int count) {
  int h = x->val.dim(1), w = x->val.dim(2);
  if (start < 0 || start + count > x->val.dim(0))
    throw std::invalid_argument("slice_ch: out of range");
  size_t off = static_cast<size_t>(start) * h * w;
  size_t len = static_cast<size_t>(count) * h * w;
  Tensor out({count, h, w});
  std::copy(x->val.v.begin() + off, x->val.v.begin() + off + len,
            out.v.begin());
  return make_node(std::move(out), {x}, [x, off, len](Node& n) {
    x->ensure_grad();
    for (size_t i = 0; i < len; ++i) x->grad.v[off + i] += n.grad.v[i];
  });
}

Var reshape(const Var& x, std::vector<int> shape) {
  if (Tensor::numel_of(shape) != x->val.numel())
    throw std::invalid_argument("reshape: element count mismatch");
  Tensor out(shape);
  out.v = x->val.v;
  return make_node(std::move(out), {x}, [x](Node& n) {
    x->ensure_grad();
    for (size_t i = 0; i < n.grad.v.size(); ++i) x->grad.v[i] += n.grad.v[i];
  });
}

namespace {

// Block index maps shared by shuffle/unshuffle: same bijection both ways.
void shuffle_index(int c_coarse, int h, int w, int r, bool to_space,
                   Tensor& out, const Tensor& in) {
  // in layout when to_space: (c*r*r, h, w) -> out (c, h*r, w*r)
  for (int c = 0; c < c_coarse; ++c)
    for (int by = 0; by < r; ++by)
      for (int bx = 0; bx < r; ++bx) {
        int cc = c * r * r + by * r + bx;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            size_t fine =
                (static_cast<size_t>(c) * (h * r) + (y * r + by)) * (w * r) +
                (x * r + bx);
            size_t coarse = (static_cast<size_t>(cc) * h + y) * w + x;
            if (to_space)
              out.v[fine] = in.v[coarse];
            else
              out.v[coarse] = in.v[fine];
          }
      }
}

}  // namespace

Var pixel_shuffle_op(const Var& x, int r) {
  int c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
  if (c % (r * r) != 0)
    throw std::invalid_argument("pixel_shuffle: channels not divisible");
  Tensor out({c / (r * r), h * r, w * r});
  shuffle_index(c / (r * r), h, w, r, true, out, x->val);
  return make_node(std::move(out), {x}, [x, c, h, w, r](Node& n) {
    x->ensure_grad();
    Tensor tmp({c, h, w});
    shuffle_index(c / (r * r), h, w, r, false, tmp, n.grad);
    for (size_t i = 0; i < tmp.v.size(); ++i) x->grad.v[i] += tmp.v[i];
  });
}

Var pixel_unshuffle_op(const Var& x, int r) {
  int c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
  if (h % r != 0 || w % r != 0)
    throw std::invalid_argument("pixel_unshuffle: dims not divisible");
  Tensor out({c * r * r, h / r, w / r});
  shuffle_index(c, h / r, w / r, r, false, out, x->val);
  return make_node(std::move(out), {x}, [x, c, h, w, r](Node& n) {
    x->ensure_grad();
    Tensor tmp({c, h, w});
    shuffle_index(c, h / r, w / r, r, true, tmp, n.grad);
    for (size_t i = 0; i < tmp.v.size(); ++i) x->grad.v[i] += tmp.v[i];
  });
}

Var crop_center_op(const Var& x, int oh, int ow) {
  int c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
  int y0 = (h - oh) / 2, x0 = (w - ow) / 2;
  if (oh > h || ow > w)
    throw std::invalid_argument("crop_center: window exceeds input");
  Tensor out({c, oh, ow});
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < oh; ++y)
      for (int xx = 0; xx < ow; ++xx)
        out.at3(ci, y, xx) = x->val.at3(ci, y0 + y, x0 + xx);
  return make_node(std::move(out), {x}, [x, c, oh, ow, y0, x0](Node& n) {
    x->ensure_grad();
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx)
          x->grad.at3(ci, y0 + y, x0 + xx) += n.grad.at3(ci, y, xx);
  });
}

Var paste_center_op(const Var& dst, const Var& src) {
  int c = dst->val.dim(0), h = dst->val.dim(1), w = dst->val.dim(2);
  int sh = src->val.dim(1), sw = src->val.dim(2);
  if (src->val.dim(0) != c)
    throw std::invalid_argument("paste_center: channel mismatch");
  if (sh > h || sw > w)
    throw std::invalid_argument("paste_center: window exceeds destination");
  int y0 = (h - sh) / 2, x0 = (w - sw) / 2;
  Tensor out = dst->val;
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < sh; ++y)
      for (int xx = 0; xx < sw; ++xx)
        out.at3(ci, y0 + y, x0 + xx) = src->val.at3(ci, y, xx);
  return make_node(std::move(out), {dst, src},
                   [dst, src, c, sh, sw, y0, x0](Node& n) {
                     if (src->requires_grad) {
                       src->ensure_grad();
                       for (int ci = 0; ci < c; ++ci)
                         for (int y = 0; y < sh; ++y)
                           for (int xx = 0; xx < sw; ++xx)
                             src->grad.at3(ci, y, xx) +=
                                 n.grad.at3(ci, y0 + y, x0 + xx);
                     }
                     if (dst->requires_grad) {
                       dst->ensure_grad();
                       for (int ci = 0; ci < c; ++ci)
                         for (int y = 0; y < n.grad.dim(1); ++y)
                           for (int xx = 0; xx < n.grad.dim(2); ++xx) {
                             bool inside = y >= y0 && y < y0 + sh && xx >= x0 &&
                                           xx < x0 + sw;
                             if (!inside)
                               dst->grad.at3(ci, y, xx) += n.grad.at3(ci, y, xx);
                           }
                     }
                   });
}

namespace {

void im2col(const Tensor& x, int k, int stride, int pad, int ho, int wo,
            std::vector<double>& col) {
  int ci = x.dim(0), h = x.dim(1), w = x.dim(2);
  col.assign(static_cast<size_t>(ci) * k * k * ho * wo, 0.0);
  size_t row = 0;
  for (int c = 0; c < ci; ++c)
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j, ++row) {
        double* dst = col.data() + row * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          int sy = oy * stride + i - pad;
          if (sy < 0 || sy >= h) continue;
          const double* src = &x.v[(static_cast<size_t>(c) * h + sy) * w];
          for (int ox = 0; ox < wo; ++ox) {
            int sx = ox * stride + j - pad;
            if (sx >= 0 && sx < w) dst[oy * wo + ox] = src[sx];
          }
        }
      }
}

void col2im(const std::vector<double>& col, int ci, int h, int w, int k,
            int stride, int pad, int ho, int wo, Tensor& dx) {
  size_t row = 0;
  for (int c = 0; c < ci; ++c)
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j, ++row) {
        const double* src = col.data() + row * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          int sy = oy * stride + i - pad;
          if (sy < 0 || sy >= h) continue;
          double* dst = &dx.v[(static_cast<size_t>(c) * h + sy) * w];
          for (int ox = 0; ox < wo; ++ox) {
            int sx = ox * stride + j - pad;
            if (sx >= 0 && sx < w) dst[sx] += src[oy * wo + ox];
          }
        }
      }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  int ci = x->val.dim(0), h = x->val.dim(1), wd = x->val.dim(2);
  int co = w->val.dim(0), k = w->val.dim(2);
  if (w->val.dim(1) != ci)
    throw std::invalid_argument("conv2d: channel mismatch");
  int ho = (h + 2 * pad - k) / stride + 1;
  int wo = (wd + 2 * pad - k) / stride + 1;
  if (ho < 1 || wo < 1) throw std::invalid_argument("conv2d: empty output");

  auto col = std::make_shared<std::vector<double>>();
  im2col(x->val, k, stride, pad, ho, wo, *col);

  Tensor out({co, ho, wo});
  {
    CMapMat wm(w->val.v.data(), co, static_cast<Eigen::Index>(ci) * k * k);
    CMapMat cm(col->data(), static_cast<Eigen::Index>(ci) * k * k,
               static_cast<Eigen::Index>(ho) * wo);
    MapMat om(out.v.data(), co, static_cast<Eigen::Index>(ho) * wo);
    om.noalias() = wm * cm;
  }
  if (b) {
    for (int c = 0; c < co; ++c) {
      double bias = b->val.v[c];
      double* row = &out.v[static_cast<size_t>(c) * ho * wo];
      for (int i = 0; i < ho * wo; ++i) row[i] += bias;
    }
  }
  std::vector<Var> parents = b ? std::vector<Var>{x, w, b}
                               : std::vector<Var>{x, w};
  return make_node(
      std::move(out), std::move(parents),
      [x, w, b, col, ci, h, wd, co, k, stride, pad, ho, wo](Node& n) {
        CMapMat gy(n.grad.v.data(), co, static_cast<Eigen::Index>(ho) * wo);
        if (w->requires_grad) {
          w->ensure_grad();
          CMapMat cm(col->data(), static_cast<Eigen::Index>(ci) * k * k,
                     static_cast<Eigen::Index>(ho) * wo);
          MapMat gw(w->grad.v.data(), co, static_cast<Eigen::Index>(ci) * k * k);
          gw.noalias() += gy * cm.transpose();
        }
        if (b && b->requires_grad) {
          b->ensure_grad();
          for (int c = 0; c < co; ++c) {
            const double* row = &n.grad.v[static_cast<size_t>(c) * ho * wo];
            double acc = 0.0;
            for (int i = 0; i < ho * wo; ++i) acc += row[i];
            b->grad.v[c] += acc;
          }
        }
        if (x->requires_grad) {
          x->ensure_grad();
          std::vector<double> dcol(static_cast<size_t>(ci) * k * k * ho * wo);
          CMapMat wm(w->val.v.data(), co, static_cast<Eigen::Index>(ci) * k * k);
          MapMat dc(dcol.data(), static_cast<Eigen::Index>(ci) * k * k,
                    static_cast<Eigen::Index>(ho) * wo);
          dc.noalias() = wm.transpose() * gy;
          col2im(dcol, ci, h, wd, k, stride, pad, ho, wo, x->grad);
        }
      });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  int n_in = x->val.dim(0);
  int m = w->val.dim(0);
  if (w->val.dim(1) != n_in)
    throw std::invalid_argument("linear: shape mismatch");
  Tensor out({m});
  for (int i = 0; i < m; ++i) {
    double acc = b ? b->val.v[i] : 0.0;
    const double* row = &w->val.v[static_cast<size_t>(i) * n_in];
    for (int j = 0; j < n_in; ++j) acc += row[j] * x->val.v[j];
    out.v[i] = acc;
  }
  std::vector<Var> parents = b ? std::vector<Var>{x, w, b}
                               : std::vector<Var>{x, w};
  return make_node(std::move(out), std::move(parents),
                   [x, w, b, n_in, m](Node& n) {
                     if (x->requires_grad) {
                       x->ensure_grad();
                       for (int i = 0; i < m; ++i) {
                         const double* row =
                             &w->val.v[static_cast<size_t>(i) * n_in];
                         for (int j = 0; j < n_in; ++j)
                           x->grad.v[j] += n.grad.v[i] * row[j];
                       }
                     }
                     if (w->requires_grad) {
                       w->ensure_grad();
                       for (int i = 0; i < m; ++i)
                         for (int j = 0; j < n_in; ++j)
                           w->grad.v[static_cast<size_t>(i) * n_in + j] +=
                               n.grad.v[i] * x->val.v[j];
                     }
                     if (b && b->requires_grad) {
                       b->ensure_grad();
                       for (int i = 0; i < m; ++i) b->grad.v[i] += n.grad.v[i];
                     }
                   });
}

Var gap2d(const Var& x) {
  int c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
  const double inv = 1.0 / (static_cast<double>(h) * w);
  Tensor out({c});
  for (int ci = 0; ci < c; ++ci) {
    double acc = 0.0;
    const double* row = &x->val.v[static_cast<size_t>(ci) * h * w];
    for (int i = 0; i < h * w; ++i) acc += row[i];
    out.v[ci] = acc * inv;
  }
  return make_node(std::move(out), {x}, [x, c, h, w, inv](Node& n) {
    x->ensure_grad();
    for (int ci = 0; ci < c; ++ci) {
      double g = n.grad.v[ci] * inv;
      double* row = &x->grad.v[static_cast<size_t>(ci) * h * w];
      for (int i = 0; i < h * w; ++i) row[i] += g;
    }
  });
}

Var scale_channels(const Var& x, const Var& s) {
  int c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
  if (s->val.numel() != c)
    throw std::invalid_argument("scale_channels: vector size mismatch");
  Tensor out(x->val.shape);
  for (int ci = 0; ci < c; ++ci) {
    double sc = s->val.v[ci];
    const double* src = &x->val.v[static_cast<size_t>(ci) * h * w];
    double* dst = &out.v[static_cast<size_t>(ci) * h * w];
    for (int i = 0; i < h * w; ++i) dst[i] = src[i] * sc;
  }
  return make_node(std::move(out), {x, s}, [x, s, c, h, w](Node& n) {
    if (x->requires_grad) {
      x->ensure_grad();
      for (int ci = 0; ci < c; ++ci) {
        double sc = s->val.v[ci];
        const double* g = &n.grad.v[static_cast<size_t>(ci) * h * w];
        double* dst = &x->grad.v[static_cast<size_t>(ci) * h * w];
        for (int i = 0; i < h * w; ++i) dst[i] += g[i] * sc;
      }
    }
    if (s->requires_grad) {
      s->ensure_grad();
      for (int ci = 0; ci < c; ++ci) {
        const double* g = &n.grad.v[static_cast<size_t>(ci) * h * w];
        const double* xv = &x->val.v[static_cast<size_t>(ci) * h * w];
        double acc = 0.0;
        for (int i = 0; i < h * w; ++i) acc += g[i] * xv[i];
        s->grad.v[ci] += acc;
      }
    }
  });
}

Var offsets_from_affine(const Var& A, const Var& t) {
  int h = A->val.dim(1), w = A->val.dim(2);
  if (A->val.dim(0) != 4 || t->val.dim(0) != 2 || t->val.dim(1) != h ||
      t->val.dim(2) != w)
    throw std::invalid_argument("offsets_from_affine: bad shapes");
  Tensor out({18, h, w});
  const int hw = h * w;
  for (int k = 0; k < 9; ++k) {
    double gy = k / 3 - 1;
    double gx = k % 3 - 1;
    for (int i = 0; i < hw; ++i) {
      double a00 = A->val.v[i], a01 = A->val.v[hw + i];
      double a10 = A->val.v[2 * hw + i], a11 = A->val.v[3 * hw + i];
      out.v[static_cast<size_t>(2 * k) * hw + i] =
          a00 * gy + a01 * gx + t->val.v[i];
      out.v[static_cast<size_t>(2 * k + 1) * hw + i] =
          a10 * gy + a11 * gx + t->val.v[hw + i];
    }
  }
  return make_node(std::move(out), {A, t}, [A, t, h, w](Node& n) {
    const int hw = h * w;
    if (A->requires_grad) A->ensure_grad();
    if (t->requires_grad) t->ensure_grad();
    for (int k = 0; k < 9; ++k) {
      double gy = k / 3 - 1;
      double gx = k % 3 - 1;
      for (int i = 0; i < hw; ++i) {
        double gdy = n.grad.v[static_cast<size_t>(2 * k) * hw + i];
        double gdx = n.grad.v[static_cast<size_t>(2 * k + 1) * hw + i];
        if (A->requires_grad) {
          A->grad.v[i] += gdy * gy;
          A->grad.v[hw + i] += gdy * gx;
          A->grad.v[2 * hw + i] += gdx * gy;
          A->grad.v[3 * hw + i] += gdx * gx;
        }
        if (t->requires_grad) {
          t->grad.v[i] += gdy;
          t->grad.v[hw + i] += gdx;
        }
      }
    }
  });
}

namespace {

// Bilinear sample of plane (h, w) at (py, px); zero outside. Also reports the
// corner coordinates/weights so callers can scatter gradients.
struct BilinearTaps {
  int y0 = 0, x0 = 0, y1 = 0, x1 = 0;
  double w00 = 0, w01 = 0, w10 = 0, w11 = 0;
  bool inside = false;
};

BilinearTaps bilinear_taps(double py, double px, int h, int w) {
  BilinearTaps tp;
  if (py <= -1.0 || py >= static_cast<double>(h) || px <= -1.0 ||
      px >= static_cast<double>(w))
    return tp;
  tp.inside = true;
  int y0 = static_cast<int>(std::floor(py));
  int x0 = static_cast<int>(std::floor(px));
  double fy = py - y0, fx = px - x0;
  tp.y0 = y0;
  tp.x0 = x0;
  tp.y1 = y0 + 1;
  tp.x1 = x0 + 1;
  bool v00 = y0 >= 0 && x0 >= 0;
  bool v01 = y0 >= 0 && tp.x1 < w;
  bool v10 = tp.y1 < h && x0 >= 0;
  bool v11 = tp.y1 < h && tp.x1 < w;
  tp.w00 = v00 ? (1 - fy) * (1 - fx) : 0.0;
  tp.w01 = v01 ? (1 - fy) * fx : 0.0;
  tp.w10 = v10 ? fy * (1 - fx) : 0.0;
  tp.w11 = v11 ? fy * fx : 0.0;
  return tp;
}

}  // namespace

Var deform_conv3x3(const Var& x, const Var& offsets, const Var& w) {
  int ci = x->val.dim(0), h = x->val.dim(1), wd = x->val.dim(2);
  if (offsets->val.dim(0) != 18 || offsets->val.dim(1) != h ||
      offsets->val.dim(2) != wd)
    throw std::invalid_argument("deform_conv3x3: offset shape mismatch");
  if (w->val.dim(0) != 9 || w->val.dim(2) != ci)
    throw std::invalid_argument("deform_conv3x3: weight shape mismatch");
  int co = w->val.dim(1);
  const int hw = h * wd;
  Tensor out({co, h, wd});
  for (int q = 0; q < hw; ++q) {
    int qy = q / wd, qx = q % wd;
    for (int k = 0; k < 9; ++k) {
      double py = qy + offsets->val.v[static_cast<size_t>(2 * k) * hw + q];
      double px = qx + offsets->val.v[static_cast<size_t>(2 * k + 1) * hw + q];
      BilinearTaps tp = bilinear_taps(py, px, h, wd);
      if (!tp.inside) continue;
      for (int c = 0; c < ci; ++c) {
        const double* plane = &x->val.v[static_cast<size_t>(c) * hw];
        auto pick = [&](int y, int xx, double wt) {
          return (wt != 0.0) ? wt * plane[y * wd + xx] : 0.0;
        };
        double s = pick(tp.y0, tp.x0, tp.w00) + pick(tp.y0, tp.x1, tp.w01) +
                   pick(tp.y1, tp.x0, tp.w10) + pick(tp.y1, tp.x1, tp.w11);
        if (s == 0.0) continue;
        const double* wk = &w->val.v[(static_cast<size_t>(k) * co) * ci + c];
        for (int o = 0; o < co; ++o)
          out.v[static_cast<size_t>(o) * hw + q] += wk[o * ci] * s;
      }
    }
  }
  return make_node(
      std::move(out), {x, offsets, w}, [x, offsets, w, ci, h, wd](Node& n) {
        int co = w->val.dim(1);
        const int hw = h * wd;
        if (x->requires_grad) x->ensure_grad();
        if (w->requires_grad) w->ensure_grad();
        if (offsets->requires_grad) offsets->ensure_grad();
        for (int q = 0; q < hw; ++q) {
          int qy = q / wd, qx = q % wd;
          for (int k = 0; k < 9; ++k) {
            double dyk = offsets->val.v[static_cast<size_t>(2 * k) * hw + q];
            double dxk =
                offsets->val.v[static_cast<size_t>(2 * k + 1) * hw + q];
            double py = qy + dyk, px = qx + dxk;
            BilinearTaps tp = bilinear_taps(py, px, h, wd);
            if (!tp.inside) continue;
            double fy = py - std::floor(py), fx = px - std::floor(px);
            double dpos_y = 0.0, dpos_x = 0.0;
            for (int c = 0; c < ci; ++c) {
              const double* plane = &x->val.v[static_cast<size_t>(c) * hw];
              double v00 = (tp.y0 >= 0 && tp.x0 >= 0)
                               ? plane[tp.y0 * wd + tp.x0]
                               : 0.0;
              double v01 = (tp.y0 >= 0 && tp.x1 < wd)
                               ? plane[tp.y0 * wd + tp.x1]
                               : 0.0;
              double v10 = (tp.y1 < h && tp.x0 >= 0)
                               ? plane[tp.y1 * wd + tp.x0]
                               : 0.0;
              double v11 = (tp.y1 < h && tp.x1 < wd)
                               ? plane[tp.y1 * wd + tp.x1]
                               : 0.0;
              double s = tp.w00 * v00 + tp.w01 * v01 + tp.w10 * v10 +
                         tp.w11 * v11;
              // dL/ds pooled over output channels for this (q, k, c).
              double ds = 0.0;
              const double* wk =
                  &w->val.v[(static_cast<size_t>(k) * co) * ci + c];
              for (int o = 0; o < co; ++o) {
                double g = n.grad.v[static_cast<size_t>(o) * hw + q];
                ds += g * wk[o * ci];
                if (w->requires_grad)
                  w->grad.v[(static_cast<size_t>(k) * co + o) * ci + c] +=
                      g * s;
              }
              if (x->requires_grad && ds != 0.0) {
                double* gp = &x->grad.v[static_cast<size_t>(c) * hw];
                if (tp.w00 != 0.0) gp[tp.y0 * wd + tp.x0] += ds * tp.w00;
                if (tp.w01 != 0.0) gp[tp.y0 * wd + tp.x1] += ds * tp.w01;
                if (tp.w10 != 0.0) gp[tp.y1 * wd + tp.x0] += ds * tp.w10;
                if (tp.w11 != 0.0) gp[tp.y1 * wd + tp.x1] += ds * tp.w11;
              }
              if (offsets->requires_grad) {
                double dvy = (v10 - v00) * (1 - fx) + (v11 - v01) * fx;
                double dvx = (v01 - v00) * (1 - fy) + (v11 - v10) * fy;
                dpos_y += ds * dvy;
                dpos_x += ds * dvx;
              }
            }
            if (offsets->requires_grad) {
              offsets->grad.v[static_cast<size_t>(2 * k) * hw + q] += dpos_y;
              offsets->grad.v[static_cast<size_t>(2 * k + 1) * hw + q] +=
                  dpos_x;
            }
          }
        }
      });
}

Var gather_plane(const Var& x, std::vector<int> linear_idx, int oh, int ow) {
  int c = x->val.dim(0);
  int hw = x->val.dim(1) * x->val.dim(2);
  if (static_cast<int>(linear_idx.size()) != oh * ow)
    throw std::invalid_argument("gather_plane: index count mismatch");
  for (int i : linear_idx)
    if (i < 0 || i >= hw)
      throw std::invalid_argument("gather_plane: index out of bounds");
  Tensor out({c, oh, ow});
  for (int ci = 0; ci < c; ++ci) {
    const double* src = &x->val.v[static_cast<size_t>(ci) * hw];
    double* dst = &out.v[static_cast<size_t>(ci) * oh * ow];
    for (size_t i = 0; i < linear_idx.size(); ++i) dst[i] = src[linear_idx[i]];
  }
  auto idx = std::make_shared<std::vector<int>>(std::move(linear_idx));
  return make_node(std::move(out), {x}, [x, idx, c, hw, oh, ow](Node& n) {
    x->ensure_grad();
    for (int ci = 0; ci < c; ++ci) {
      double* dst = &x->grad.v[static_cast<size_t>(ci) * hw];
      const double* g = &n.grad.v[static_cast<size_t>(ci) * oh * ow];
      for (size_t i = 0; i < idx->size(); ++i) dst[(*idx)[i]] += g[i];
    }
  });
}

Var unfold_patches(const Var& x, int k, int stride) {
  int c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
  if (k < 1 || k > h || k > w)
    throw std::invalid_argument("unfold_patches: invalid patch size");
  if (stride < 1) throw std::invalid_argument("unfold_patches: invalid stride");
  int ny = (h - k) / stride + 1;
  int nx = (w - k) / stride + 1;
  int p = ny * nx;
  Tensor out({p, c, k * k});
  for (int py = 0; py < ny; ++py)
    for (int px = 0; px < nx; ++px) {
      int pi = py * nx + px;
      for (int ci = 0; ci < c; ++ci)
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j)
            out.v[(static_cast<size_t>(pi) * c + ci) * k * k + i * k + j] =
                x->val.at3(ci, py * stride + i, px * stride + j);
    }
  return make_node(std::move(out), {x}, [x, k, stride, c, ny, nx](Node& n) {
    x->ensure_grad();
    for (int py = 0; py < ny; ++py)
      for (int px = 0; px < nx; ++px) {
        int pi = py * nx + px;
        for (int ci = 0; ci < c; ++ci)
          for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
              x->grad.at3(ci, py * stride + i, px * stride + j) +=
                  n.grad
                      .v[(static_cast<size_t>(pi) * c + ci) * k * k + i * k + j];
      }
  });
}

Var project_patches(const Var& u, const Tensor& m) {
  int p = u->val.dim(0), c = u->val.dim(1), kk = u->val.dim(2);
  if (m.dim(1) != c)
    throw std::invalid_argument("project_patches: projection shape mismatch");
  int cp = m.dim(0);
  Tensor out({p, cp, kk});
  CMapMat mm(m.v.data(), cp, c);
  for (int pi = 0; pi < p; ++pi) {
    CMapMat um(&u->val.v[static_cast<size_t>(pi) * c * kk], c, kk);
    MapMat om(&out.v[static_cast<size_t>(pi) * cp * kk], cp, kk);
    om.noalias() = mm * um;
  }
  Tensor mcopy = m;
  return make_node(std::move(out), {u}, [u, mcopy, p, c, cp, kk](Node& n) {
    u->ensure_grad();
    CMapMat mm(mcopy.v.data(), cp, c);
    for (int pi = 0; pi < p; ++pi) {
      CMapMat gm(&n.grad.v[static_cast<size_t>(pi) * cp * kk], cp, kk);
      MapMat dum(&u->grad.v[static_cast<size_t>(pi) * c * kk], c, kk);
      dum.noalias() += mm.transpose() * gm;
    }
  });
}

Var sort_last(const Var& u) {
  int kk = u->val.shape.back();
  int rows = static_cast<int>(u->val.numel()) / kk;
  Tensor out(u->val.shape);
  auto perms = std::make_shared<std::vector<int>>(
      static_cast<size_t>(rows) * kk);
  std::vector<int> idx(kk);
  for (int r = 0; r < rows; ++r) {
    const double* src = &u->val.v[static_cast<size_t>(r) * kk];
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [src](int a, int b) { return src[a] < src[b]; });
    double* dst = &out.v[static_cast<size_t>(r) * kk];
    int* pr = &(*perms)[static_cast<size_t>(r) * kk];
    for (int t = 0; t < kk; ++t) {
      dst[t] = src[idx[t]];
      pr[t] = idx[t];
    }
  }
  return make_node(std::move(out), {u}, [u, perms, rows, kk](Node& n) {
    u->ensure_grad();
    for (int r = 0; r < rows; ++r) {
      const double* g = &n.grad.v[static_cast<size_t>(r) * kk];
      const int* pr = &(*perms)[static_cast<size_t>(r) * kk];
      double* dst = &u->grad.v[static_cast<size_t>(r) * kk];
      for (int t = 0; t < kk; ++t) dst[pr[t]] += g[t];
    }
  });
}

Var l1(const Var& a, const Var& b) {
  check_same_shape(a, b, "l1");
  const double inv = 1.0 / static_cast<double>(a->val.numel());
  Tensor out({1});
  double acc = 0.0;
  for (size_t i = 0; i < a->val.v.size(); ++i)
    acc += std::fabs(a->val.v[i] - b->val.v[i]);
  out.v[0] = acc * inv;
  return make_node(std::move(out), {a, b}, [a, b, inv](Node& n) {
    double g = n.grad.v[0] * inv;
    if (a->requires_grad) a->ensure_grad();
    if (b->requires_grad) b->ensure_grad();
    for (size_t i = 0; i < a->val.v.size(); ++i) {
      double d = a->val.v[i] - b->val.v[i];
      double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      if (a->requires_grad) a->grad.v[i] += g * s;
      if (b->requires_grad) b->grad.v[i] -= g * s;
    }
  });
}

Var centroid_penalty(const Var& w) {
  if (w->val.ndim() != 4)
    throw std::invalid_argument("centroid_penalty: expected (Co,Ci,k,k)");
  int co = w->val.dim(0), ci = w->val.dim(1), k = w->val.dim(2);
  if (k != w->val.dim(3) || k % 2 == 0)
    throw std::invalid_argument("centroid_penalty: kernel must be square odd");
  const double inv = 1.0 / (static_cast<double>(co) * ci);
  Tensor out({1});
  double total = 0.0;
  for (int o = 0; o < co; ++o)
    for (int c = 0; c < ci; ++c) {
      double sy = 0.0, sx = 0.0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          double wv = w->val.at4(o, c, i, j);
          sy += (i - k / 2.0 + 0.5) * wv;
          sx += (j - k / 2.0 + 0.5) * wv;
        }
      total += std::fabs(sy) + std::fabs(sx);
    }
  out.v[0] = total * inv;
  return make_node(std::move(out), {w}, [w, co, ci, k, inv](Node& n) {
    w->ensure_grad();
    double g = n.grad.v[0] * inv;
    for (int o = 0; o < co; ++o)
      for (int c = 0; c < ci; ++c) {
        double sy = 0.0, sx = 0.0;
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j) {
            double wv = w->val.at4(o, c, i, j);
            sy += (i - k / 2.0 + 0.5) * wv;
            sx += (j - k / 2.0 + 0.5) * wv;
          }
        double ssy = sy > 0.0 ? 1.0 : (sy < 0.0 ? -1.0 : 0.0);
        double ssx = sx > 0.0 ? 1.0 : (sx < 0.0 ? -1.0 : 0.0);
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j)
            w->grad.at4(o, c, i, j) +=
                g * (ssy * (i - k / 2.0 + 0.5) + ssx * (j - k / 2.0 + 0.5));
      }
  });
}

}  // namespace zsr::ad
