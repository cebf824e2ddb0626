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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sasv/attention.hpp"
#include "sasv/data_io.hpp"
#include "sasv/fusion.hpp"
#include "sasv/metrics.hpp"
#include "sasv/ops.hpp"
#include "sasv/tensor.hpp"

namespace sasv {

/// Declarative description of a backend network.
///
/// DNN configs (no conv layers) take the CONCAT input and run linear +
/// LeakyReLU per entry of dnn_nodes. CNN configs run conv -> batch norm ->
/// LeakyReLU per conv layer ("same" padding, stride 1), insert attention
/// after conv layer attention_position, adaptive-average-pool to pool_size,
/// flatten and run the same DNN head. A final linear layer maps the last
/// hidden width to num_classes logits.
struct ModelConfig {
  std::string name;
  FusionMode fusion_mode = FusionMode::kConcat;
  std::vector<std::size_t> conv_channels;
  std::vector<std::size_t> conv_kernels;
  std::vector<std::size_t> pool_size;  // 1 entry for 1D, 2 for 2D
  std::vector<std::size_t> dnn_nodes;
  std::optional<AttentionKind> attention_kind;
  std::optional<std::size_t> attention_position;
  std::size_t reduction_ratio = 8;
  std::size_t num_classes = 2;

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(std::string_view text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// The eight named architectures.
std::span<const std::string_view> preset_names();
ModelConfig preset_config(std::string_view name);

struct EmbeddingDims {
  std::size_t d = 192;  // enrollment speaker
  std::size_t b = 192;  // test speaker
  std::size_t q = 160;  // test CM

  friend bool operator==(const EmbeddingDims&, const EmbeddingDims&) = default;
};

class Model {
 public:
  /// Weights ~ U(-sqrt(6/fan_in), sqrt(6/fan_in)); biases 0; norm gamma 1,
  /// beta 0; running stats (0, 1).
  static Model build(const ModelConfig& config, EmbeddingDims dims, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  EmbeddingDims dims() const { return dims_; }
  std::uint64_t seed() const { return seed_; }

  void set_training(bool training) { training_ = training; }
  bool training() const { return training_; }

  /// Logits [B x num_classes]. `batch` holds B fused items along axis 0 and
  /// must use the config's fusion mode.
  Tensor forward(const FusedInput& batch, Tape* tape = nullptr);

  /// Probability of the target class for each item (evaluation mode).
  std::vector<double> score(const FusedInput& batch) const;

  std::vector<std::pair<std::string, Tensor>>& parameters() { return params_; }
  const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }
  std::vector<Tensor> parameter_list() const;
  Tensor& parameter(std::string_view name);
  std::size_t num_parameters() const;

  /// Batch-norm running statistics, one per conv layer.
  std::vector<ops::RunningStats>& norm_stats() { return norm_stats_; }
  const std::vector<ops::RunningStats>& norm_stats() const { return norm_stats_; }
  const AttentionParams* attention() const { return attention_ ? &*attention_ : nullptr; }

  struct Snapshot {
    std::vector<std::vector<double>> params;
    std::vector<ops::RunningStats> stats;
  };
  Snapshot snapshot() const;
  void restore(const Snapshot& snapshot);

  /// Checkpoint bytes: "SASVCKPT", u32 format version, u64 header length,
  /// JSON header (config, dims, seed, tensor table), then float64 LE data.
  std::string serialize() const;
  static Model deserialize(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

  /// Digest of the config echo and all parameter bytes.
  std::string digest() const;

 private:
  Model() = default;
  Tensor forward_impl(const FusedInput& batch, ops::NormMode mode, Tape* tape,
                      std::vector<ops::RunningStats>& stats) const;
  void check_input(const FusedInput& batch) const;
  const Tensor& param(std::string_view name) const;

  ModelConfig config_;
  EmbeddingDims dims_;
  std::uint64_t seed_ = 0;
  bool training_ = false;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<ops::RunningStats> norm_stats_;
  std::optional<AttentionParams> attention_;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Softmax probability of class 1 from a row of two logits.
double target_probability(double logit_other, double logit_target);

/// Scores every protocol trial in evaluation mode; trial ids follow
/// trial_id(index). Labels are attached.
ScoreSet score_protocol(const Model& model, const EmbeddingStore& store, const Protocol& protocol,
                        std::size_t batch_size = 64);

}  // namespace sasv
