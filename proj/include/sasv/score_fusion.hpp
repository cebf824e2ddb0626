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

// Combining several systems' trial scores: plain averaging, or a logistic
// regression over the per-system scores fitted on calibration trials.

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sasv/metrics.hpp"

namespace sasv {

enum class FusionMethod { kAverage, kLinear };

std::string_view fusion_method_name(FusionMethod method);
FusionMethod parse_fusion_method(std::string_view name);

inline constexpr double kFusionL2Penalty = 1e-6;
inline constexpr double kFusionGradTolerance = 1e-8;
inline constexpr std::size_t kFusionMaxIterations = 10000;

struct FusionModel {
  FusionMethod method = FusionMethod::kAverage;
  std::vector<double> weights;  // LINEAR: one per system
  double bias = 0.0;
  // Fit diagnostics (LINEAR only).
  bool converged = true;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
  double objective = 0.0;  // penalized mean logistic loss at the solution

  std::string to_json() const;
  static FusionModel from_json(std::string_view text);
};

/// Per-trial arithmetic mean, in the first system's trial order. Labels come
/// from the first system.
ScoreSet average_scores(std::span<const ScoreSet> systems);

/// Maximizes the logistic log-likelihood of "target" given w.s + b, with an
/// L2 penalty of kFusionL2Penalty on w. Systems must carry labels.
FusionModel fit_linear(std::span<const ScoreSet> systems);

/// Mean logistic loss (no penalty) of sigmoid(w.s + b) against target labels.
double logistic_loss(const FusionModel& model, std::span<const ScoreSet> systems);

/// AVERAGE: mean score. LINEAR: sigmoid(w.s + b).
ScoreSet apply_fusion(const FusionModel& model, std::span<const ScoreSet> systems);

void save_fusion_model(const FusionModel& model, const std::filesystem::path& path);
FusionModel load_fusion_model(const std::filesystem::path& path);

}  // namespace sasv
