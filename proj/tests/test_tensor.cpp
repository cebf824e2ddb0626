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

#include <array>
#include <cmath>

#include "oracles.hpp"
#include "sasv/error.hpp"
#include "sasv/ops.hpp"

using namespace sasv;
using oracle::pick;
using oracle::random_tensor;

namespace {

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

ErrorCategory category_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.category();
  }
  FAIL("expected an error");
  return ErrorCategory::kInternal;
}

}  // namespace

TEST_CASE("matmul") {
  const Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  const Tensor m = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(values(ops::matmul(eye, m)) == std::vector<double>{1, 2, 3, 4});
  CHECK(ops::matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4})).item() == 11.0);

  oracle::Rng rng(1);
  const Tensor a = random_tensor({5, 7}, rng), b = random_tensor({7, 3}, rng);
  CHECK(oracle::max_abs_diff(ops::matmul(a, b).data(), oracle::matmul(a, b)) <= 1e-12);

  try {
    ops::matmul(a, a);
    FAIL("mismatch accepted");
  } catch (const Error& e) {
    CHECK(e.category() == ErrorCategory::kDimension);
    CHECK(std::string(e.what()).find("[5x7]") != std::string::npos);
  }
}

TEST_CASE("conv1d") {
  const Tensor x = Tensor::from({1, 1, 3}, {1, 2, 3});
  const Tensor none;
  CHECK(values(ops::conv1d(x, Tensor::from({1, 1, 1}, {1}), none, {})) ==
        std::vector<double>{1, 2, 3});
  CHECK(values(ops::conv1d(x, Tensor::zeros({1, 1, 3}), none, {1, 1})) ==
        std::vector<double>{0, 0, 0});
  CHECK(category_of([&] { ops::conv1d(x, Tensor::zeros({1, 1, 5}), none, {}); }) ==
        ErrorCategory::kDimension);

  oracle::Rng rng(2);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t B = pick(rng, 1, 3), Ci = pick(rng, 1, 4), Co = pick(rng, 1, 4);
    const std::size_t k = pick(rng, 1, 5), L = pick(rng, k, 12), stride = pick(rng, 1, 3),
                      pad = pick(rng, 0, k / 2);
    const Tensor xi = random_tensor({B, Ci, L}, rng), w = random_tensor({Co, Ci, k}, rng),
                 b = random_tensor({Co}, rng);
    worst = std::max(worst, oracle::max_abs_diff(ops::conv1d(xi, w, b, {stride, pad}).data(),
                                                 oracle::conv1d(xi, w, b, stride, pad)));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("conv2d") {
  oracle::Rng rng(3);
  const Tensor img = random_tensor({2, 1, 4, 5}, rng);
  CHECK(values(ops::conv2d(img, Tensor::from({1, 1, 1, 1}, {1}), Tensor(), {})) == values(img));
  CHECK(ops::conv2d(Tensor::full({1, 1, 3, 3}, 1.0), Tensor::full({1, 1, 3, 3}, 1.0), Tensor(), {})
            .item() == 9.0);

  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t B = pick(rng, 1, 2), Ci = pick(rng, 1, 3), Co = pick(rng, 1, 3);
    const std::size_t k = pick(rng, 1, 4), H = pick(rng, k, 8), W = pick(rng, k, 8),
                      stride = pick(rng, 1, 2), pad = pick(rng, 0, k / 2);
    const Tensor x = random_tensor({B, Ci, H, W}, rng), w = random_tensor({Co, Ci, k, k}, rng),
                 b = random_tensor({Co}, rng);
    worst = std::max(worst, oracle::max_abs_diff(ops::conv2d(x, w, b, {stride, pad}).data(),
                                                 oracle::conv2d(x, w, b, stride, pad)));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("adaptive average pooling") {
  const std::array<std::size_t, 1> two{2};
  CHECK(values(ops::adaptive_avg_pool(Tensor::from({1, 1, 4}, {1, 2, 3, 4}), two)) ==
        std::vector<double>{1.5, 3.5});

  oracle::Rng rng(4);
  const Tensor x = random_tensor({2, 3, 10}, rng);
  const std::array<std::size_t, 1> same{10}, three{3}, zero{0}, wide{11};
  CHECK(values(ops::adaptive_avg_pool(x, same)) == values(x));
  CHECK(oracle::max_abs_diff(ops::adaptive_avg_pool(x, three).data(),
                             oracle::adaptive_pool(x, three)) <= 1e-12);
  CHECK(category_of([&] { ops::adaptive_avg_pool(x, zero); }) == ErrorCategory::kDimension);
  CHECK(category_of([&] { ops::adaptive_avg_pool(x, wide); }) == ErrorCategory::kDimension);

  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t H = pick(rng, 1, 12), W = pick(rng, 1, 12);
    const std::array<std::size_t, 2> out{pick(rng, 1, H), pick(rng, 1, W)};
    const Tensor img = random_tensor({pick(rng, 1, 2), pick(rng, 1, 3), H, W}, rng);
    worst = std::max(worst, oracle::max_abs_diff(ops::adaptive_avg_pool(img, out).data(),
                                                 oracle::adaptive_pool(img, out)));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("batch norm") {
  auto stats = ops::RunningStats::identity(2);
  const Tensor ones = Tensor::full({2}, 1.0), zeros = Tensor::zeros({2});
  const Tensor constant = Tensor::full({3, 2, 4}, 7.0);
  const Tensor flat = ops::batch_norm(constant, ones, zeros, stats, ops::NormMode::kTrain);
  for (double v : flat.data()) CHECK(v == 0.0);

  oracle::Rng rng(5);
  const Tensor x = random_tensor({4, 2, 5}, rng);
  const Tensor beta = Tensor::from({2}, {0.3, -0.7});
  const Tensor y0 = ops::batch_norm(x, zeros, beta, stats, ops::NormMode::kTrain);
  for (std::size_t i = 0; i < y0.numel(); ++i) CHECK(y0[i] == beta[(i / 5) % 2]);

  auto fresh = ops::RunningStats::identity(2);
  const Tensor y = ops::batch_norm(x, ones, zeros, fresh, ops::NormMode::kTrain);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0.0, var = 0.0, in_mean = 0.0, in_var = 0.0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t f = 0; f < 5; ++f) {
        mean += y[(b * 2 + c) * 5 + f] / 20.0;
        in_mean += x[(b * 2 + c) * 5 + f] / 20.0;
      }
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t f = 0; f < 5; ++f) {
        var += std::pow(y[(b * 2 + c) * 5 + f] - mean, 2) / 20.0;
        in_var += std::pow(x[(b * 2 + c) * 5 + f] - in_mean, 2) / 20.0;
      }
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(var - in_var / (in_var + ops::kBatchNormEps)) < 1e-9);
    CHECK(fresh.mean[c] == doctest::Approx(0.1 * in_mean).epsilon(1e-12));
  }

  // Evaluation mode applies the running statistics.
  ops::RunningStats fixed{{1.0, -1.0}, {4.0, 0.25}};
  const Tensor e = ops::batch_norm(x, ones, zeros, fixed, ops::NormMode::kEval);
  CHECK(e[0] == doctest::Approx((x[0] - 1.0) / std::sqrt(4.0 + ops::kBatchNormEps)));
  CHECK(e[5] == doctest::Approx((x[5] + 1.0) / std::sqrt(0.25 + ops::kBatchNormEps)));

  CHECK(category_of([&] {
          ops::batch_norm(random_tensor({1, 2, 3}, rng), ones, zeros, stats, ops::NormMode::kTrain);
        }) == ErrorCategory::kInvalidArgument);
}

TEST_CASE("activations") {
  CHECK(ops::leaky_relu(Tensor::from({1}, {-1.0}), 0.01).item() == doctest::Approx(-0.01));
  CHECK(ops::leaky_relu(Tensor::from({1}, {2.5})).item() == 2.5);
  CHECK(ops::sigmoid(Tensor::from({1}, {0.0})).item() == 0.5);
  const Tensor s = ops::sigmoid(Tensor::from({2}, {-800.0, 800.0}));
  CHECK(s[0] == 0.0);
  CHECK(s[1] == 1.0);
  const Tensor ls = ops::log_softmax(Tensor::from({1, 2}, {1000.0, 1000.0}), 1);
  CHECK(ls[0] == -std::log(2.0));
  CHECK(ls[1] == -std::log(2.0));
}

TEST_CASE("backward") {
  const Tensor x = Tensor::parameter({2, 3}, {1, 2, 3, 4, 5, 6});
  {
    Tape tape;
    tape.backward(ops::sum(x, &tape));
    for (double g : x.grad()) CHECK(g == 1.0);
    CHECK(tape.empty());
  }
  const Tensor v = Tensor::parameter({2}, {1, 2});
  Tape tape;
  tape.backward(ops::sum(ops::mul(v, v, &tape), &tape));
  CHECK(values(Tensor::from({2}, {v.grad()[0], v.grad()[1]})) == std::vector<double>{2, 4});

  // Gradients accumulate until cleared.
  tape.backward(ops::sum(ops::mul(v, v, &tape), &tape));
  CHECK(v.grad()[1] == 8.0);

  Tape empty;
  CHECK(category_of([&] { empty.backward(ops::sum(v)); }) == ErrorCategory::kInvalidArgument);
  Tape wide;
  const Tensor not_scalar = ops::scale(v, 2.0, &wide);
  CHECK(category_of([&] { wide.backward(not_scalar); }) == ErrorCategory::kDimension);

  // Nothing is recorded without a grad-requiring input.
  Tape idle;
  ops::sum(Tensor::from({2}, {1, 2}), &idle);
  CHECK(idle.empty());
}

TEST_CASE("finite-difference gradients per op") {
  oracle::Rng rng(6);
  const double h = 1e-6;
  for (int t = 0; t < 5; ++t) {
    const std::size_t B = pick(rng, 2, 3), C = pick(rng, 1, 3), L = pick(rng, 3, 6);
    const Tensor x = random_tensor({B, C, L}, rng, true);
    const Tensor probe = random_tensor({B, C, L}, rng);
    auto weigh = [&](const Tensor& y, Tape* tape) {
      return ops::sum(ops::mul(y, probe, tape), tape);
    };
    const Tensor w1 = random_tensor({2, C, 3}, rng, true), b1 = random_tensor({2}, rng, true);
    CHECK(oracle::gradient_error(
              [&](Tape* tp) {
                return ops::sum(ops::mul(ops::conv1d(x, w1, b1, {1, 1}, tp),
                                         Tensor::full({B, 2, L}, 0.5), tp),
                                tp);
              },
              {x, w1, b1}, h) < 1e-6);
    const Tensor gamma = random_tensor({C}, rng, true), beta = random_tensor({C}, rng, true);
    CHECK(oracle::gradient_error(
              [&](Tape* tp) {
                auto stats = ops::RunningStats::identity(C);
                return weigh(ops::batch_norm(x, gamma, beta, stats, ops::NormMode::kTrain, tp), tp);
              },
              {x, gamma, beta}, h) < 1e-6);
    CHECK(oracle::gradient_error([&](Tape* tp) { return weigh(ops::leaky_relu(x, 0.01, tp), tp); },
                                 {x}, h) < 1e-6);
    CHECK(oracle::gradient_error([&](Tape* tp) { return weigh(ops::sigmoid(x, tp), tp); }, {x},
                                 h) < 1e-6);
    CHECK(oracle::gradient_error([&](Tape* tp) { return weigh(ops::log_softmax(x, 2, tp), tp); },
                                 {x}, h) < 1e-6);
    const std::array<std::size_t, 1> pool{2};
    CHECK(oracle::gradient_error(
              [&](Tape* tp) {
                return ops::sum(ops::mul(ops::adaptive_avg_pool(x, pool, tp),
                                         Tensor::full({B, C, 2}, 1.5), tp),
                                tp);
              },
              {x}, h) < 1e-6);
    const Tensor img = random_tensor({B, C, L, L}, rng, true);
    const Tensor w2 = random_tensor({2, C, 3, 3}, rng, true);
    CHECK(oracle::gradient_error(
              [&](Tape* tp) { return ops::sum(ops::conv2d(img, w2, Tensor(), {1, 1}, tp), tp); },
              {img, w2}, h) < 1e-6);
    const Tensor a = random_tensor({3, 4}, rng, true), m = random_tensor({4, 2}, rng, true);
    const Tensor mix = random_tensor({3, 2}, rng);
    CHECK(oracle::gradient_error(
              [&](Tape* tp) { return ops::sum(ops::mul(ops::matmul(a, m, tp), mix, tp), tp); },
              {a, m}, h) < 1e-6);
  }
}

TEST_CASE("forward passes are deterministic") {
  oracle::Rng rng(7);
  const Tensor x = random_tensor({2, 3, 6, 6}, rng), w = random_tensor({4, 3, 3, 3}, rng);
  CHECK(values(ops::conv2d(x, w, Tensor(), {1, 1})) == values(ops::conv2d(x, w, Tensor(), {1, 1})));
}
