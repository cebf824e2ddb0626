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

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sasv/data_io.hpp"
#include "sasv/metrics.hpp"
#include "sasv/model.hpp"
#include "sasv/tensor.hpp"

namespace sasv {

struct TrainConfig {
  double lr0 = 1e-3;
  double weight_decay = 1e-3;
  std::array<double, 2> class_weights{0.1, 0.9};  // (negative, target)
  double schedule_decay = 1e-4;                   // per optimizer step
  std::size_t batch_size = 256;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  // Keep the parameters of the epoch with the lowest dev SASV-EER (ties go to
  // the lower dev loss) when a dev protocol is given; otherwise keep the
  // final epoch.
  bool select_on_dev = true;

  /// Sets one field from its key=value spelling.
  void set(std::string_view key, std::string_view value);
  void validate() const;
  std::string to_json() const;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

struct OptimizerState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

/// One Adam update with bias correction. Weight decay is added to the
/// gradient before the moment updates. State is sized on first use.
void adam_step(std::span<Tensor> params, OptimizerState& state, double lr, double weight_decay);

double lr_at(std::uint64_t step, const TrainConfig& cfg);

/// (1/B) * sum_i weights[y_i] * -log_softmax(logits_i)[y_i].
Tensor weighted_cross_entropy(const Tensor& logits, std::span<const std::size_t> labels,
                              std::span<const double> class_weights, Tape* tape = nullptr);

/// 1 for target trials, 0 for nontarget and spoof.
std::size_t training_label(TrialLabel label);

/// Weighted cross-entropy of labelled target probabilities, as
/// weighted_cross_entropy() would give for the matching logits.
double scored_cross_entropy(const ScoreSet& scores, std::span<const double> class_weights);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double lr = 0.0;        // rate used by the epoch's last step
  std::optional<EerReport> dev;
  std::optional<double> dev_loss;  // scored_cross_entropy on dev

  std::string to_json() const;  // one line, no trailing newline
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  std::size_t selected_epoch = 0;
  OptimizerState optimizer;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains in place. On return the model holds the selected epoch's
/// parameters and is in evaluation mode.
TrainResult fit(Model& model, const EmbeddingStore& store, const Protocol& train,
                const Protocol* dev, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace sasv
