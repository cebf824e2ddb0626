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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sasv/data_io.hpp"

namespace sasv {

struct ScoredTrial {
  std::string trial_id;
  double score = 0.0;
  TrialLabel label = TrialLabel::kTarget;
};

/// Per-trial scores. Labels are optional on disk; they are attached from a
/// protocol with attach_labels().
struct ScoreSet {
  std::vector<ScoredTrial> trials;
  std::uint64_t seed = 0;
  std::string digest;  // config digest of the producer
};

/// Score file: '#' header lines then "trial_id<TAB>score" per line.
ScoreSet load_scores(const std::filesystem::path& path);
ScoreSet parse_scores(std::string_view text);
std::string format_scores(const ScoreSet& scores);
void save_scores(const ScoreSet& scores, const std::filesystem::path& path);

/// Sets each score's label from the protocol trial its id names. Every
/// protocol trial must be present exactly once.
void attach_labels(ScoreSet& scores, const Protocol& protocol);

struct EerPoint {
  double eer = 0.0;        // fraction in [0, 1]
  double threshold = 0.0;  // interpolated decision threshold at the crossing
};

/// Equal error rate. FAR(t) = |neg >= t| / |neg|, FRR(t) = |pos < t| / |pos|,
/// swept over the sorted distinct scores plus one threshold above the max;
/// the crossing is linearly interpolated between the bracketing points.
EerPoint eer(std::span<const double> pos, std::span<const double> neg);

struct DetPoint {
  double far = 0.0;
  double frr = 0.0;
  double threshold = 0.0;
};

/// Operating points in increasing threshold order; the last threshold lies
/// just above the largest score (FAR = 0, FRR = 1).
std::vector<DetPoint> det_points(std::span<const double> pos, std::span<const double> neg);

enum class Metric { kSasv, kSpf, kSv };
std::string_view metric_name(Metric metric);

struct MetricResult {
  std::optional<double> eer_percent;  // absent when a partition is empty
  double threshold = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

struct EerReport {
  std::array<MetricResult, 3> metrics;  // indexed by Metric
  std::size_t targets = 0;
  std::size_t nontargets = 0;
  std::size_t spoofs = 0;

  const MetricResult& operator[](Metric m) const { return metrics[static_cast<std::size_t>(m)]; }

  /// "SASV-EER SPF-EER SV-EER" with 3 decimals; "-" for absent metrics.
  std::string triple() const;
  std::string table() const;
  std::string json() const;
};

/// SASV: target vs nontarget+spoof. SPF: target vs spoof. SV: target vs
/// nontarget.
EerReport evaluate(const ScoreSet& scores);

/// Positive and negative score lists for one metric.
std::pair<std::vector<double>, std::vector<double>> metric_partition(const ScoreSet& scores,
                                                                     Metric metric);

}  // namespace sasv
