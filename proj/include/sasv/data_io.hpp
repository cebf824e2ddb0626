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

// Embedding stores, trial protocols and the synthetic embedding generator.
//
// Embedding file:
//   #EMB v1 d_spk=<int> d_cm=<int>
//   utt_id<TAB>spk|cm<TAB>v0,v1,...
// Protocol file:
//   enroll_id[,enroll_id...]<TAB>test_id<TAB>target|nontarget|spoof

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sasv/fusion.hpp"

namespace sasv {

enum class TrialLabel { kTarget, kNontarget, kSpoof };

std::string_view label_name(TrialLabel label);
TrialLabel parse_label(std::string_view token);

struct Trial {
  std::vector<std::string> enroll_ids;
  std::string test_id;
  TrialLabel label = TrialLabel::kTarget;

  friend bool operator==(const Trial&, const Trial&) = default;
};

enum class Partition { kTrain, kDev, kEval };
std::string_view partition_name(Partition partition);

struct Protocol {
  Partition partition = Partition::kTrain;
  std::vector<Trial> trials;

  std::array<std::size_t, 3> label_counts() const;  // target, nontarget, spoof
};

/// Identifier of the trial at `index` in its protocol ("t000042"); score
/// files key on it.
std::string trial_id(std::size_t index);

Protocol parse_protocol(const std::filesystem::path& path, Partition partition = Partition::kEval);
Protocol parse_protocol_text(std::string_view text, Partition partition = Partition::kEval);
std::string format_protocol(const Protocol& protocol);
void save_protocol(const Protocol& protocol, const std::filesystem::path& path);

class EmbeddingStore {
 public:
  EmbeddingStore(std::size_t d_spk, std::size_t d_cm);

  std::size_t d_spk() const { return d_spk_; }
  std::size_t d_cm() const { return d_cm_; }
  /// Number of distinct utterance ids.
  std::size_t size() const { return entries_.size(); }

  void add_speaker(const std::string& utt_id, std::vector<double> embedding);
  void add_cm(const std::string& utt_id, std::vector<double> embedding);

  const std::vector<double>* speaker(std::string_view utt_id) const;
  const std::vector<double>* cm(std::string_view utt_id) const;
  std::vector<std::string> ids() const;

  /// Enrollment speaker embedding is the mean over the trial's enrollment
  /// utterances.
  TrialEmbeddings trial_embeddings(const Trial& trial) const;

  friend bool operator==(const EmbeddingStore&, const EmbeddingStore&) = default;

 private:
  struct Entry {
    std::optional<std::vector<double>> spk;
    std::optional<std::vector<double>> cm;
    friend bool operator==(const Entry&, const Entry&) = default;
  };
  std::size_t d_spk_;
  std::size_t d_cm_;
  std::map<std::string, Entry, std::less<>> entries_;
};

EmbeddingStore load_embeddings(const std::filesystem::path& path);
EmbeddingStore parse_embeddings(std::string_view text);
std::string format_embeddings(const EmbeddingStore& store);
void save_embeddings(const EmbeddingStore& store, const std::filesystem::path& path);

struct TrialCounts {
  std::size_t target = 0;
  std::size_t nontarget = 0;
  std::size_t spoof = 0;
};

/// Gaussian cluster model of speaker and CM embedding spaces.
///
/// Speaker means lie on a sphere of radius sigma_between; bonafide speaker
/// embeddings add N(0, sigma_within^2) per dimension. Bonafide CM embeddings
/// are N(0, cm_spread^2) around the origin. A spoof of speaker s has speaker
/// embedding mean_s + N(0, sigma_within^2 + spoof_spk_noise^2) and a CM
/// embedding displaced by spoof_shift along one of num_attacks directions.
struct SynthConfig {
  std::size_t train_speakers = 50;
  std::size_t dev_speakers = 10;
  std::size_t eval_speakers = 20;
  std::size_t enroll_utterances = 3;     // fixed enrollment set per speaker
  std::size_t test_utterances = 10;      // bonafide test utterances per speaker
  std::size_t spoof_utterances = 10;     // spoofed utterances per attacked speaker
  std::size_t num_attacks = 4;
  std::size_t d_spk = 16;
  std::size_t d_cm = 12;
  double sigma_within = 0.04;
  double sigma_between = 1.0;
  double cm_spread = 0.4;
  double spoof_shift = 3.0;
  double spoof_spk_noise = 0.05;
  TrialCounts train{100, 100, 100};
  TrialCounts dev{50, 50, 50};
  TrialCounts eval{200, 200, 200};
  std::uint64_t seed = 0;

  void set(std::string_view key, std::string_view value);
  std::string to_text() const;  // key=value lines
  void validate() const;
};

SynthConfig parse_synth_config(std::string_view text);

struct SyntheticData {
  EmbeddingStore store;
  Protocol train;
  Protocol dev;
  Protocol eval;
};

SyntheticData generate_synthetic(const SynthConfig& cfg);

}  // namespace sasv
