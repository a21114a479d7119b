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
#include <vector>

#include "zsr/tensor.hpp"

namespace zsr::ad {

// Reverse-mode automatic differentiation over Tensor values. Each operation
// returns a new node holding the result and a closure that routes the
// incoming gradient to its parents. backward() walks nodes in reverse
// creation order, so evaluation is deterministic for a fixed graph.
struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor val;
  Tensor grad;
  bool requires_grad = false;
  uint64_t order = 0;
  std::vector<Var> parents;
  std::function<void(Node&)> backfn;

  void accumulate(const Tensor& g);
  void ensure_grad();
};

Var constant(Tensor t);
Var leaf(Tensor t);  // participates in gradients

// Backpropagate from a scalar (1-element) node.
void backward(const Var& root);

// --- elementwise / reductions ---
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var relu(const Var& a);
Var sigmoid(const Var& a);
Var abs_op(const Var& a);
Var mean_all(const Var& a);  // -> {1}
Var sum_all(const Var& a);   // -> {1}

// --- shape / layout ---
Var concat_ch(const std::vector<Var>& xs);         // (Ci,H,W) -> (sum C,H,W)
Var slice_vec(const Var& x, int start, int len);   // 1-D slice
Var slice_ch(const Var& x, int start, int count);  // channel slice of (C,H,W)
Var reshape(const Var& x, std::vector<int> shape); // same element order
Var pixel_shuffle_op(const Var& x, int r);
Var pixel_unshuffle_op(const Var& x, int r);
Var crop_center_op(const Var& x, int oh, int ow);  // (C,H,W) -> (C,oh,ow)
// Replaces the centered window of dst with src; both (C, *, *).
Var paste_center_op(const Var& dst, const Var& src);

// --- dense layers ---
// x (Ci,H,W), w (Co,Ci,k,k), optional b (Co). Zero padding `pad`.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// x (N), w (M,N), optional b (M).
Var linear(const Var& x, const Var& w, const Var& b);
Var gap2d(const Var& x);                        // (C,H,W) -> (C)
Var scale_channels(const Var& x, const Var& s); // x (C,H,W) * s (C)

// --- deformable sampling ---
// Offsets per pixel and tap from an affine head: A (4,H,W) [a00,a01,a10,a11],
// t (2,H,W) -> P (18,H,W) with P[2k] = dy_k, P[2k+1] = dx_k evaluated on the
// fixed 3x3 neighborhood coding.
Var offsets_from_affine(const Var& A, const Var& t);
// y(q) = sum_k w_k x(q + p_k), bilinear, zero outside. x (Ci,H,W),
// offsets (18,H,W), w (9,Co,Ci) -> (Co,H,W).
Var deform_conv3x3(const Var& x, const Var& offsets, const Var& w);

// --- gathers ---
// out(c, i) = x(c, linear_idx[i]); idx addresses x's H*W plane, out is
// (C, oh, ow) with oh*ow == idx.size().
Var gather_plane(const Var& x, std::vector<int> linear_idx, int oh, int ow);

// --- sliced-distribution pieces ---
// (C,H,W) -> (P, C, k*k) overlapping patches with the given stride.
Var unfold_patches(const Var& x, int k, int stride);
// u (P,C,K) x M (C',C) -> (P,C',K); M is a constant projection.
Var project_patches(const Var& u, const Tensor& m);
// Sorts along the last dim independently per leading index.
Var sort_last(const Var& u);

// Mean |a - b|.
Var l1(const Var& a, const Var& b);

// Channel-centroid penalty of a conv kernel stack w (Co,Ci,k,k): for every
// (out,in) channel pair, |sum (i-k/2+0.5) w| + |sum (j-k/2+0.5) w|, averaged
// over pairs.
Var centroid_penalty(const Var& w);

}  // namespace zsr::ad
