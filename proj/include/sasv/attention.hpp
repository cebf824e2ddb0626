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

#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sasv/tensor.hpp"

namespace sasv {

enum class AttentionKind {
  kSE1D,  // squeeze-and-excitation over [B x C x F]
  kSE2D,  // squeeze-and-excitation over [B x C x H x W]
  kPA,    // parallel channel/feature gating over [B x C x F]
  kVSE,   // coordinate-style variant of SE over [B x C x H x W]
};

std::string_view attention_kind_name(AttentionKind kind);
AttentionKind parse_attention_kind(std::string_view name);

/// max(1, floor(dim / r))
std::size_t reduced_dim(std::size_t dim, std::size_t reduction_ratio);

/// Gate weights for one attention block. Linear maps carry no bias.
///
/// Weight names by kind:
///   SE1D, SE2D: "squeeze" [C x C/r], "excite" [C/r x C]
///   PA:         "w1" [F x F/r], "w2" [F/r x F], "w3" [C x C/r], "w4" [C/r x C]
///   VSE:        "shared" [C x C/r], "gate_h" [C/r x C], "gate_w" [C/r x C]
struct AttentionParams {
  AttentionKind kind = AttentionKind::kSE1D;
  std::size_t reduction_ratio = 8;
  std::size_t channels = 0;
  std::size_t features = 0;  // F for PA; unused otherwise
  std::vector<std::pair<std::string, Tensor>> weights;

  const Tensor& weight(std::string_view name) const;
  Tensor& weight(std::string_view name);
};

/// Allocates weights with uniform(-sqrt(6/fan_in), sqrt(6/fan_in)) entries.
AttentionParams make_attention(AttentionKind kind, std::size_t channels, std::size_t features,
                               std::size_t reduction_ratio, std::mt19937_64& rng);

/// T' = T2 . T . T1 where T1 gates features and T2 gates channels.
Tensor parallel_attention(const Tensor& t, const AttentionParams& params, Tape* tape = nullptr);
Tensor se_attention_1d(const Tensor& t, const AttentionParams& params, Tape* tape = nullptr);
Tensor se_attention_2d(const Tensor& t, const AttentionParams& params, Tape* tape = nullptr);
Tensor vse_attention(const Tensor& t, const AttentionParams& params, Tape* tape = nullptr);

/// Dispatches on params.kind.
Tensor apply_attention(const Tensor& t, const AttentionParams& params, Tape* tape = nullptr);

}  // namespace sasv
