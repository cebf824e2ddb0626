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

// Turning one trial's (enrollment speaker, test speaker, test CM) embeddings
// into a network input: flat concatenation, a 3-channel 1D stack, or a
// 3-channel stack of circulant matrices.

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "sasv/tensor.hpp"

namespace sasv {

struct TrialEmbeddings {
  std::vector<double> enroll_spk;  // mean over enrollment utterances, length d
  std::vector<double> test_spk;    // length b
  std::vector<double> test_cm;     // length q
};

enum class FusionMode { kConcat, kStack1D, kCirc2D };

std::string_view fusion_mode_name(FusionMode mode);
FusionMode parse_fusion_mode(std::string_view name);

struct FusedInput {
  FusionMode mode = FusionMode::kConcat;
  Tensor tensor;  // [d+b+q], [3 x D] or [3 x D x D]
};

/// Shape of one fused item (no batch axis) for embedding dims (d, b, q).
Shape fused_shape(FusionMode mode, std::size_t d, std::size_t b, std::size_t q);

FusedInput concat(const TrialEmbeddings& te);

/// Right-pads each embedding with zeros to D = max(d, b, q).
std::array<std::vector<double>, 3> pad_to_common(const TrialEmbeddings& te);

/// D x D circulant: row i is row i-1 rotated one step right, so
/// out[i][j] = v[(j - i) mod D].
Tensor circulant(std::span<const double> v);

FusedInput stack_1d(const TrialEmbeddings& te);
FusedInput stack_circulant_2d(const TrialEmbeddings& te);

FusedInput fuse(const TrialEmbeddings& te, FusionMode mode);

/// Stacks fused items along a new leading batch axis. All items must share
/// (d, b, q).
Tensor fuse_batch(std::span<const TrialEmbeddings> trials, FusionMode mode);

}  // namespace sasv
