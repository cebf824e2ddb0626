// Copyright 2026 The sasv-ensemble Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "oracles.hpp"
#include "sasv/error.hpp"
#include "sasv/ops.hpp"

using namespace sasv;
using oracle::pick;
using oracle::random_tensor;

namespace {

void fill(AttentionParams& p, double value) {
  for (auto& [name, w] : p.weights) {
    for (double& v : w.mutable_data()) v = value;
  }
}

// Saturates every gate at 1: non-negative inputs give non-negative
// squeezes, and large positive weights push the gate logits far right.
void saturate(AttentionParams& p) { fill(p, 50.0); }

Tensor positive_tensor(Shape shape, oracle::Rng& rng) {
  auto v = oracle::uniform(shape_numel(shape), rng, 0.1, 1.0);
  return Tensor::from(std::move(shape), std::move(v));
}

}  // namespace

TEST_CASE("reduced dimension never drops below one") {
  CHECK(reduced_dim(64, 8) == 8);
  CHECK(reduced_dim(12, 8) == 1);
  CHECK(reduced_dim(3, 8) == 1);
}

TEST_CASE("weight shapes follow channels, features and ratio") {
  oracle::Rng rng(1);
  const AttentionParams pa = make_attention(AttentionKind::kPA, 64, 40, 8, rng);
  CHECK(pa.weight("w1").shape() == Shape{40, 5});
  CHECK(pa.weight("w2").shape() == Shape{5, 40});
  CHECK(pa.weight("w3").shape() == Shape{64, 8});
  CHECK(pa.weight("w4").shape() == Shape{8, 64});
  const AttentionParams vse = make_attention(AttentionKind::kVSE, 16, 0, 8, rng);
  CHECK(vse.weight("shared").shape() == Shape{16, 2});
  CHECK(vse.weight("gate_h").shape() == Shape{2, 16});
  CHECK(vse.weight("gate_w").shape() == Shape{2, 16});
}

TEST_CASE("parallel attention") {
  oracle::Rng rng(2);
  AttentionParams p = make_attention(AttentionKind::kPA, 4, 6, 2, rng);
  const Tensor zeros = Tensor::zeros({2, 4, 6});
  const Tensor none = parallel_attention(zeros, p);
  for (double v : none.data()) CHECK(v == 0.0);

  const Tensor t = random_tensor({2, 4, 6}, rng);
  {
    AttentionParams z = p;
    z.weights.clear();
    for (const auto& [n, w] : p.weights) z.weights.emplace_back(n, Tensor::zeros(w.shape()));
    const Tensor out = parallel_attention(t, z);
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(out[i] == 0.25 * t[i]);
  }

  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const std::size_t B = pick(rng, 1, 4), C = pick(rng, 1, 9), F = pick(rng, 1, 12);
    AttentionParams q = make_attention(AttentionKind::kPA, C, F, pick(rng, 1, 8), rng);
    const Tensor x = random_tensor({B, C, F}, rng);
    worst = std::max(worst, oracle::max_abs_diff(parallel_attention(x, q).data(),
                                                 oracle::parallel_attention(x, q)));
  }
  CHECK(worst <= 1e-12);

  // One channel: the channel gate is a single scalar per item.
  AttentionParams single = make_attention(AttentionKind::kPA, 1, 5, 8, rng);
  const Tensor x1 = random_tensor({3, 1, 5}, rng);
  CHECK(oracle::max_abs_diff(parallel_attention(x1, single).data(),
                             oracle::parallel_attention(x1, single)) <= 1e-12);

  CHECK_THROWS_AS(parallel_attention(random_tensor({2, 5, 6}, rng), p), Error);
}

TEST_CASE("parallel attention is equivariant to batch permutation") {
  oracle::Rng rng(3);
  const AttentionParams p = make_attention(AttentionKind::kPA, 3, 5, 2, rng);
  const Tensor t = random_tensor({4, 3, 5}, rng);
  const std::array<std::size_t, 4> perm{2, 0, 3, 1};
  std::vector<double> permuted(t.numel());
  const std::size_t item = 15;
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t k = 0; k < item; ++k) permuted[b * item + k] = t[perm[b] * item + k];
  const Tensor out = parallel_attention(t, p);
  const Tensor out_p = parallel_attention(Tensor::from({4, 3, 5}, permuted), p);
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t k = 0; k < item; ++k) CHECK(out_p[b * item + k] == out[perm[b] * item + k]);
}

TEST_CASE("squeeze-and-excitation") {
  oracle::Rng rng(4);
  AttentionParams se1 = make_attention(AttentionKind::kSE1D, 8, 0, 8, rng);
  const Tensor none1 = se_attention_1d(Tensor::zeros({2, 8, 5}), se1);
  for (double v : none1.data()) CHECK(v == 0.0);
  {
    AttentionParams z = se1;
    z.weights = {{"squeeze", se1.weight("squeeze")}, {"excite", Tensor::zeros({1, 8})}};
    const Tensor t = random_tensor({2, 8, 5}, rng);
    const Tensor out = se_attention_1d(t, z);
    for (std::size_t i = 0; i < t.numel(); ++i) CHECK(out[i] == 0.5 * t[i]);
  }

  AttentionParams se2 = make_attention(AttentionKind::kSE2D, 8, 0, 4, rng);
  const Tensor none2 = se_attention_2d(Tensor::zeros({1, 8, 3, 3}), se2);
  for (double v : none2.data()) CHECK(v == 0.0);
  {
    AttentionParams s = se2;
    saturate(s);
    const Tensor t = positive_tensor({2, 8, 3, 4}, rng);
    CHECK(oracle::max_abs_diff(se_attention_2d(t, s).data(), t.data()) <= 1e-6);
  }

  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const std::size_t B = pick(rng, 1, 3), C = pick(rng, 1, 16), r = pick(rng, 1, 8);
    AttentionParams a = make_attention(AttentionKind::kSE1D, C, 0, r, rng);
    const Tensor x = random_tensor({B, C, pick(rng, 1, 9)}, rng);
    worst = std::max(worst, oracle::max_abs_diff(se_attention_1d(x, a).data(),
                                                 oracle::se_attention(x, a)));
    AttentionParams b = make_attention(AttentionKind::kSE2D, C, 0, r, rng);
    const Tensor y = random_tensor({B, C, pick(rng, 1, 6), pick(rng, 1, 6)}, rng);
    worst = std::max(worst, oracle::max_abs_diff(se_attention_2d(y, b).data(),
                                                 oracle::se_attention(y, b)));
  }
  CHECK(worst <= 1e-12);
  CHECK_THROWS_AS(se_attention_1d(random_tensor({1, 8, 3}, rng), se2), Error);
}

TEST_CASE("variant SE attention") {
  oracle::Rng rng(5);
  AttentionParams v = make_attention(AttentionKind::kVSE, 8, 0, 8, rng);
  const Tensor none = vse_attention(Tensor::zeros({1, 8, 4, 4}), v);
  for (double x : none.data()) CHECK(x == 0.0);
  {
    AttentionParams s = v;
    saturate(s);
    const Tensor t = positive_tensor({2, 8, 4, 3}, rng);
    CHECK(oracle::max_abs_diff(vse_attention(t, s).data(), t.data()) <= 1e-6);
  }
  double worst = 0.0;
  for (int k = 0; k < 50; ++k) {
    const std::size_t C = pick(rng, 1, 16);
    AttentionParams a = make_attention(AttentionKind::kVSE, C, 0, pick(rng, 1, 8), rng);
    const Tensor x = random_tensor({pick(rng, 1, 3), C, pick(rng, 1, 6), pick(rng, 1, 6)}, rng);
    worst = std::max(worst,
                     oracle::max_abs_diff(vse_attention(x, a).data(), oracle::vse_attention(x, a)));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("attention preserves shape and contracts magnitudes") {
  oracle::Rng rng(6);
  for (AttentionKind kind :
       {AttentionKind::kSE1D, AttentionKind::kSE2D, AttentionKind::kPA, AttentionKind::kVSE}) {
    const bool flat = kind == AttentionKind::kSE1D || kind == AttentionKind::kPA;
    const Shape shape = flat ? Shape{3, 6, 7} : Shape{3, 6, 4, 5};
    const AttentionParams p = make_attention(kind, 6, 7, 2, rng);
    const Tensor t = random_tensor(shape, rng);
    const Tensor out = apply_attention(t, p);
    CHECK(out.shape() == shape);
    for (std::size_t i = 0; i < t.numel(); ++i) {
      if (t[i] != 0.0) CHECK(std::abs(out[i]) < std::abs(t[i]));
    }
  }
}

TEST_CASE("attention gradients match finite differences") {
  oracle::Rng rng(7);
  for (AttentionKind kind :
       {AttentionKind::kSE1D, AttentionKind::kSE2D, AttentionKind::kPA, AttentionKind::kVSE}) {
    for (int k = 0; k < 3; ++k) {
      const bool flat = kind == AttentionKind::kSE1D || kind == AttentionKind::kPA;
      const std::size_t B = pick(rng, 1, 3), C = pick(rng, 2, 6), F = pick(rng, 2, 5);
      const Shape shape = flat ? Shape{B, C, F} : Shape{B, C, F, pick(rng, 2, 5)};
      const AttentionParams p = make_attention(kind, C, F, 2, rng);
      const Tensor t = random_tensor(shape, rng, true);
      const Tensor probe = random_tensor(shape, rng);
      std::vector<Tensor> params{t};
      for (const auto& [n, w] : p.weights) params.push_back(w);
      const double err = oracle::gradient_error(
          [&](Tape* tape) {
            return ops::sum(ops::mul(apply_attention(t, p, tape), probe, tape), tape);
          },
          params);
      CHECK_MESSAGE(err < 1e-6, attention_kind_name(kind));
    }
  }
}
