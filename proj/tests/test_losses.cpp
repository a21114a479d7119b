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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradcheck.hpp"
#include "zsr/align_lr.hpp"
#include "zsr/losses.hpp"
#include "zsr/rng.hpp"

using namespace zsr;
using namespace zsr::loss;

namespace {

Tensor random_tensor(std::vector<int> shape, uint64_t seed, double lo = -1.0,
                     double hi = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (double& v : t.v) v = rng.uniform(lo, hi);
  return t;
}

Tensor unit_row() {
  Tensor m({1, 1});
  m.v[0] = 1.0;
  return m;
}

// Exact 1-D Wasserstein-1 (mean form) by exhaustive assignment search.
double w1_bruteforce(std::vector<double> u, std::vector<double> v) {
  std::vector<int> perm(v.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double cost = 0.0;
    for (size_t i = 0; i < u.size(); ++i)
      cost += std::fabs(u[i] - v[static_cast<size_t>(perm[i])]);
    best = std::min(best, cost / static_cast<double>(u.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("l1 loss closed forms and symmetry") {
  ImagePlane a(8, 8, 3, 0.5);
  ImagePlane b(8, 8, 3, 0.75);
  CHECK(l1_loss(a, a) == 0.0);
  CHECK(l1_loss(a, b) == doctest::Approx(0.25));
  Rng rng(1);
  ImagePlane c(8, 8, 3), d(8, 8, 3);
  for (double& v : c.data) v = rng.uniform();
  for (double& v : d.data) v = rng.uniform();
  CHECK(l1_loss(c, d) == doctest::Approx(l1_loss(d, c)));
  CHECK_THROWS(l1_loss(a, ImagePlane(4, 4, 3)));
}

TEST_CASE("projection rows live on the unit sphere") {
  Rng rng(2);
  Tensor m = random_projection(5, 7, rng);
  for (int r = 0; r < 5; ++r) {
    double norm = 0.0;
    for (int c = 0; c < 7; ++c)
      norm += m.v[static_cast<size_t>(r) * 7 + c] * m.v[static_cast<size_t>(r) * 7 + c];
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("single-patch sliced distance sorts away permutations") {
  // Values {1,3,2} vs {2,1,3}: identical multisets, zero distance.
  Tensor u({1, 1, 3}), v({1, 1, 3});
  u.v = {1.0, 3.0, 2.0};
  v.v = {2.0, 1.0, 3.0};
  ad::Var d = sliced_wasserstein(ad::constant(u), ad::constant(v), unit_row());
  CHECK(d->val.v[0] == doctest::Approx(0.0));
}

TEST_CASE("single-patch sliced distance of constant gap is the gap") {
  Tensor u({1, 4, 4}, 0.0), v({1, 4, 4}, 1.0);
  ad::Var d = sliced_wasserstein(ad::constant(u), ad::constant(v), unit_row());
  CHECK(d->val.v[0] == doctest::Approx(1.0));
}

TEST_CASE("identical inputs give zero local distance") {
  Tensor u = random_tensor({3, 12, 12}, 3);
  Rng rng(4);
  Tensor m = random_projection(3, 3, rng);
  ad::Var d = local_sliced_wasserstein(ad::constant(u), ad::constant(u), m, 8, 4);
  CHECK(d->val.v[0] == doctest::Approx(0.0));
}

TEST_CASE("global distance absorbs spatial permutations, local does not") {
  Rng rng(5);
  Tensor u = random_tensor({1, 8, 8}, 6);
  // Cross-patch permutation: swap two distant blocks.
  Tensor v = u;
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      std::swap(v.at3(0, y, x), v.at3(0, y + 4, x + 4));

  Tensor m = unit_row();
  ad::Var global = sliced_wasserstein(ad::constant(u), ad::constant(v), m);
  CHECK(global->val.v[0] == doctest::Approx(0.0).epsilon(1e-12));

  ad::Var local =
      local_sliced_wasserstein(ad::constant(u), ad::constant(v), m, 4, 2);
  CHECK(local->val.v[0] > 1e-3);
}

TEST_CASE("single projection matches the exhaustive transport oracle") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    int n = 4 + static_cast<int>(rng.uniform_int(5));  // 4..8 points
    Tensor u({1, 1, n}), v({1, 1, n});
    for (int i = 0; i < n; ++i) {
      u.v[static_cast<size_t>(i)] = rng.uniform(-2.0, 2.0);
      v.v[static_cast<size_t>(i)] = rng.uniform(-2.0, 2.0);
    }
    ad::Var d =
        sliced_wasserstein(ad::constant(u), ad::constant(v), unit_row());
    double want = w1_bruteforce(u.v, v.v);
    CHECK(std::fabs(d->val.v[0] - want) < 1e-9);
  }
}

TEST_CASE("local distance is permutation-invariant within a patch") {
  // Exhaustively over all orderings of a 4-element patch.
  Tensor u({1, 2, 2}), v({1, 2, 2});
  u.v = {0.3, -0.7, 1.2, 0.05};
  v.v = {0.9, 0.1, -0.4, 0.6};
  Tensor m = unit_row();
  double base =
      local_sliced_wasserstein(ad::constant(u), ad::constant(v), m, 2, 1)
          ->val.v[0];
  std::vector<int> perm{0, 1, 2, 3};
  do {
    Tensor up({1, 2, 2});
    for (int i = 0; i < 4; ++i)
      up.v[static_cast<size_t>(i)] = u.v[static_cast<size_t>(perm[i])];
    double got =
        local_sliced_wasserstein(ad::constant(up), ad::constant(v), m, 2, 1)
            ->val.v[0];
    CHECK(got == doctest::Approx(base).epsilon(1e-12));
  } while (std::next_permutation(perm.begin(), perm.end()));
}

TEST_CASE("local distance is nonnegative and zero only when sorted match") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Tensor u = random_tensor({2, 8, 8}, 200 + seed);
    Tensor v = random_tensor({2, 8, 8}, 300 + seed);
    Rng rng(400 + seed);
    Tensor m = random_projection(2, 2, rng);
    double d =
        local_sliced_wasserstein(ad::constant(u), ad::constant(v), m, 4, 2)
            ->val.v[0];
    CHECK(d >= 0.0);
    CHECK(d > 1e-6);  // random inputs essentially never coincide
  }
}

TEST_CASE("local distance gradient matches finite differences") {
  Tensor u = random_tensor({2, 6, 6}, 7);
  Tensor v = random_tensor({2, 6, 6}, 8);
  Rng rng(9);
  Tensor m = random_projection(2, 2, rng);

  ad::Var uv = ad::leaf(u);
  ad::Var d = local_sliced_wasserstein(uv, ad::constant(v), m, 4, 2);
  ad::backward(d);
  auto f = [&](const Tensor& t) {
    return local_sliced_wasserstein(ad::constant(t), ad::constant(v), m, 4, 2)
        ->val.v[0];
  };
  for (size_t i = 0; i < u.v.size(); i += 3) {
    double want = testutil::numeric_grad(f, u, i);
    CHECK(testutil::rel_err(uv->grad.v[i], want) < 1e-3);
  }
}

TEST_CASE("expectation over projection draws is stable") {
  Tensor u = random_tensor({4, 16, 16}, 10);
  Tensor v = random_tensor({4, 16, 16}, 11);
  auto average = [&](uint64_t seed) {
    Rng rng(seed);
    double acc = 0.0;
    for (int i = 0; i < 64; ++i) {
      Tensor m = random_projection(4, 4, rng);
      acc += local_sliced_wasserstein(ad::constant(u), ad::constant(v), m, 8, 4)
                 ->val.v[0];
    }
    return acc / 64.0;
  };
  double a = average(1000);
  double b = average(2000);
  CHECK(std::fabs(a - b) / std::max(a, b) < 0.05);
}

TEST_CASE("invalid patch geometry is rejected") {
  Tensor u = random_tensor({1, 8, 8}, 12);
  Tensor m = unit_row();
  CHECK_THROWS(local_sliced_wasserstein(ad::constant(u), ad::constant(u), m,
                                        4, 4));  // stride == k
  CHECK_THROWS(local_sliced_wasserstein(ad::constant(u), ad::constant(u), m,
                                        9, 2));  // k exceeds extent
}

TEST_CASE("total loss arms") {
  nn::ParamStore store;
  PerceptualPyramid phi(store, "phi", 777);

  Tensor y = random_tensor({3, 32, 32}, 13, 0.0, 1.0);
  Tensor t = random_tensor({3, 32, 32}, 14, 0.0, 1.0);

  LossConfig cfg;
  cfg.arm = LossArm::kL1;
  {
    nn::GraphCtx g(&store);
    Rng proj(5);
    ad::Var l = total_loss(g, ad::constant(y), t, phi, cfg, proj);
    ad::Var plain = ad::l1(ad::constant(y), ad::constant(t));
    CHECK(l->val.v[0] == doctest::Approx(plain->val.v[0]));
  }
  {
    // Zero weight reduces any arm to plain l1.
    nn::GraphCtx g(&store);
    LossConfig zero = cfg;
    zero.arm = LossArm::kL1LocalSw;
    zero.sw_weight = 0.0;
    Rng proj(6);
    ad::Var l = total_loss(g, ad::constant(y), t, phi, zero, proj);
    ad::Var plain = ad::l1(ad::constant(y), ad::constant(t));
    CHECK(l->val.v[0] == doctest::Approx(plain->val.v[0]));
  }
  for (LossArm arm :
       {LossArm::kL1, LossArm::kL1GlobalSw, LossArm::kL1LocalSw}) {
    nn::GraphCtx g(&store);
    LossConfig c = cfg;
    c.arm = arm;
    Rng proj(7);
    ad::Var l = total_loss(g, ad::constant(y), t, phi, c, proj);
    CHECK(std::isfinite(l->val.v[0]));
    // Perfect reconstruction scores zero in every arm.
    nn::GraphCtx g2(&store);
    Rng proj2(8);
    ad::Var z = total_loss(g2, ad::constant(t), t, phi, c, proj2);
    CHECK(z->val.v[0] == doctest::Approx(0.0).epsilon(1e-12));
  }
  CHECK(loss_arm_from_string("l1_losw") == LossArm::kL1LocalSw);
  CHECK(loss_arm_to_string(LossArm::kL1GlobalSw) == "l1_sw");
}

TEST_CASE("total loss default weight follows the configured value") {
  nn::ParamStore store;
  PerceptualPyramid phi(store, "phi", 778);
  Tensor y = random_tensor({3, 16, 16}, 15, 0.0, 1.0);
  Tensor t = random_tensor({3, 16, 16}, 16, 0.0, 1.0);

  LossConfig cfg;  // default arm l1+local, weight 0.08
  CHECK(cfg.sw_weight == doctest::Approx(0.08));
  nn::GraphCtx g(&store);
  Rng proj(17);
  ad::Var with = total_loss(g, ad::constant(y), t, phi, cfg, proj);
  nn::GraphCtx g2(&store);
  LossConfig just_l1 = cfg;
  just_l1.arm = LossArm::kL1;
  Rng proj2(17);
  ad::Var base = total_loss(g2, ad::constant(y), t, phi, just_l1, proj2);
  CHECK(with->val.v[0] > base->val.v[0]);
}
