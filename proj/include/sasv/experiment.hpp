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

// Run files: key=value lines naming a preset, the data and the training
// settings. Relative paths resolve against a working directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "sasv/metrics.hpp"
#include "sasv/training.hpp"

namespace sasv {

struct ExperimentConfig {
  std::string model;  // preset name
  std::filesystem::path embeddings;
  std::filesystem::path train_protocol;
  std::optional<std::filesystem::path> dev_protocol;
  std::optional<std::filesystem::path> eval_protocol;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  // Optional expected embedding sizes, checked against the store.
  std::optional<std::size_t> d_spk;
  std::optional<std::size_t> d_cm;
  // Adds the dev trials to the training data; checkpoint selection then
  // falls back to the final epoch.
  bool train_on_dev = false;
  TrainConfig train;

  /// Checks required keys and that every referenced input exists.
  void validate() const;
};

/// Parses run-file text. Paths are joined onto `workdir` unless absolute.
ExperimentConfig parse_experiment(std::string_view text, const std::filesystem::path& workdir);
ExperimentConfig load_experiment(const std::filesystem::path& path,
                                 const std::filesystem::path& workdir);

struct ExperimentResult {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::optional<std::filesystem::path> eval_scores;
  std::optional<EerReport> eval_report;
  TrainResult training;
};

/// Trains the preset and writes model.ckpt, train_log.jsonl and run.json to
/// the output directory; with an eval protocol also eval_scores.txt.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace sasv
