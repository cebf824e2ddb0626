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

#pragma once

// Differentiable primitives. Every op takes an optional tape as its last
// argument; with a null tape (or no input requiring grad) nothing is
// recorded and the op is a plain forward computation.

#include <cstddef>
#include <span>
#include <vector>

#include "sasv/tensor.hpp"

namespace sasv::ops {

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kLeakySlope = 0.01;

// [M x K] x [K x N] -> [M x N]
Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

// x [B x In] * weight [In x Out] + bias [Out]. bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias,
              Tape* tape = nullptr);

struct Conv1dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Cross-correlation; x [B x Cin x L], weight [Cout x Cin x k], bias [Cout].
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              Conv1dOptions options, Tape* tape = nullptr);

/// Cross-correlation; x [B x Cin x H x W], weight [Cout x Cin x kh x kw].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              Conv2dOptions options, Tape* tape = nullptr);

/// Mean over adaptive bins. output_size has one entry for [B x C x L] input
/// and two for [B x C x H x W]. Bin i covers [floor(i*L/O), ceil((i+1)*L/O)).
Tensor adaptive_avg_pool(const Tensor& x, std::span<const std::size_t> output_size,
                         Tape* tape = nullptr);

struct RunningStats {
  std::vector<double> mean;
  std::vector<double> var;

  static RunningStats identity(std::size_t channels) {
    return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
  }
};

enum class NormMode { kTrain, kEval };

/// Per-channel normalization over batch and spatial axes of x [B x C x ...].
/// Training mode uses batch moments and updates stats in place.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  RunningStats& stats, NormMode mode, Tape* tape = nullptr);

Tensor leaky_relu(const Tensor& x, double slope = kLeakySlope, Tape* tape = nullptr);
Tensor relu(const Tensor& x, Tape* tape = nullptr);
Tensor sigmoid(const Tensor& x, Tape* tape = nullptr);
Tensor log_softmax(const Tensor& x, std::size_t axis, Tape* tape = nullptr);

/// Elementwise product with broadcasting over axes of extent 1. Both
/// operands must have the same rank.
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor scale(const Tensor& x, double factor, Tape* tape = nullptr);

/// Mean over one axis; the axis is removed from the shape.
Tensor mean(const Tensor& x, std::size_t axis, Tape* tape = nullptr);
Tensor sum(const Tensor& x, Tape* tape = nullptr);
Tensor reshape(const Tensor& x, Shape shape, Tape* tape = nullptr);
/// Swaps two axes (materialized copy).
Tensor transpose(const Tensor& x, std::size_t axis0, std::size_t axis1, Tape* tape = nullptr);

/// (1/B) * sum_i weights[i] * (-log_probs[i, targets[i]]) over log_probs [B x K].
Tensor weighted_nll(const Tensor& log_probs, std::span<const std::size_t> targets,
                    std::span<const double> weights, Tape* tape = nullptr);

}  // namespace sasv::ops
